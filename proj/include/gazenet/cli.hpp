#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "gazenet/config.hpp"

namespace gazenet::cli {

struct Context {
    std::filesystem::path out_root = "runs";
    int threads = 1;
    std::ostream* out = nullptr;  // stdout by default
};

/// Creates `<out_root>/<command>-<UTC timestamp>[-n]` and writes the
/// resolved config and seed into it.
std::filesystem::path make_run_dir(const Context& ctx, const std::string& command, const RunConfig& cfg);

// Each command returns its run directory.
std::filesystem::path cmd_synth(const RunConfig& cfg, const Context& ctx);
std::filesystem::path cmd_cluster(const RunConfig& cfg, const Context& ctx);
std::filesystem::path cmd_target(const RunConfig& cfg, const Context& ctx);
std::filesystem::path cmd_train(const RunConfig& cfg, const Context& ctx);
std::filesystem::path cmd_eval(const RunConfig& cfg, const Context& ctx);
std::filesystem::path cmd_stats(const RunConfig& cfg, const Context& ctx);

/// Prints {"pitch_rad", "yaw_rad", "pitch_deg", "yaw_deg", "cluster"} as JSON.
void cmd_infer(const RunConfig& cfg, const Angles& head, std::ostream& os);

/// Entry point; returns the process exit code. Errors go to stderr.
int run(int argc, char** argv);

}  // namespace gazenet::cli
