#pragma once

// Logged-dataset construction for offline training: behavior policies,
// stratified train/test split, NDJSON persistence, and content hashing.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "marca/env/env.hpp"

namespace marca::env {

enum class LoggingPolicy { uniform_random, epsilon_mixture };

std::string to_string(LoggingPolicy p);
LoggingPolicy logging_policy_from_string(const std::string& s);

struct DatasetStats {
  std::vector<long> joint_action_counts;
  double reward_mean = 0.0;
  double reward_std = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

struct LoggedDataset {
  std::vector<EpisodeRecord> episodes;
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  std::string policy;
  double policy_epsilon = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t env_hash = 0;

  DatasetStats stats(const Env& env) const;
};

// Behavior policy support must cover every joint action (offline Q-learning
// needs it); epsilon must stay positive for the mixture policy.
LoggedDataset build_logged_dataset(const Env& env, LoggingPolicy policy, std::size_t n_requests,
                                   std::uint64_t seed, double epsilon = 0.3,
                                   double test_fraction = 0.2);

// NDJSON, one episode per line; derived vectors (obs/state) are rebuilt by
// the env on load so files stay small and the schema stays stable.
std::string serialize_ndjson(const LoggedDataset& ds);
LoggedDataset parse_ndjson(const std::string& text, const Env& env);

void save_dataset(const LoggedDataset& ds, const std::filesystem::path& path);
LoggedDataset load_dataset(const std::filesystem::path& path, const Env& env);

std::uint64_t dataset_content_hash(const LoggedDataset& ds);

}  // namespace marca::env
