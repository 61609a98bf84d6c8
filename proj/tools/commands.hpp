#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "sgda/graph_io.hpp"
#include "sgda/ppmi.hpp"
#include "sgda/trainer.hpp"

namespace sgda::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericalFailure = 3 };

// Parses `args` (without the program name) and runs one subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Dataset directory layout written by `synth` and read by the other
// commands: {source,target}.{edges,attr,labels}, optionally
// {source,target}.names for attribute-union alignment.
DomainPair load_data_dir(const std::filesystem::path& dir);

// Identifies a reconstructed topology: walk settings, NEG toggle, root seed
// and the adjacency of both domains.
std::string ppmi_cache_key(const TrainConfig& cfg, const DomainPair& pair);

}  // namespace sgda::cli
