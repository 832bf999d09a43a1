#include "gazenet/cli.hpp"

int main(int argc, char** argv) { return gazenet::cli::run(argc, argv); }
