#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace pd4ml {

// Entry point of the pd4ml tool. args excludes the program name.
// Returns 0 on success, 2 on usage errors and 1 on any other failure.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Run-directory layout.
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kCheckpointFile = "checkpoint.pd4m";
inline constexpr const char* kPreprocessFile = "preprocess.pd4m";
inline constexpr const char* kMetricsFile = "metrics.json";
inline constexpr const char* kLogFile = "train.log";
inline constexpr const char* kSummaryFile = "summary.json";

// Raises glibc's mmap and trim thresholds so the many short-lived tensor
// buffers of a training step are recycled instead of mapped and zeroed by
// the kernel each time. No-op elsewhere.
void tune_allocator();

}  // namespace pd4ml
