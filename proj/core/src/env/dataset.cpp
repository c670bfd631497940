#include "marca/env/dataset.hpp"

#include <cmath>

#include <json.hpp>

#include "marca/io.hpp"

namespace marca::env {

using ordered_json = nlohmann::ordered_json;

std::string to_string(LoggingPolicy p) {
  return p == LoggingPolicy::uniform_random ? "uniform_random" : "epsilon_mixture";
}

LoggingPolicy logging_policy_from_string(const std::string& s) {
  if (s == "uniform_random") return LoggingPolicy::uniform_random;
  if (s == "epsilon_mixture") return LoggingPolicy::epsilon_mixture;
  fail("unknown logging policy: " + s);
}

DatasetStats LoggedDataset::stats(const Env& env) const {
  DatasetStats st;
  st.joint_action_counts.assign(static_cast<std::size_t>(env.actions().joint_count()), 0);
  double sum = 0.0, sum2 = 0.0;
  for (const auto& ep : episodes) {
    st.joint_action_counts[static_cast<std::size_t>(env.actions().encode(ep.actions))]++;
    sum += ep.reward;
    sum2 += ep.reward * ep.reward;
  }
  const double n = static_cast<double>(episodes.size());
  if (n > 0) {
    st.reward_mean = sum / n;
    st.reward_std = std::sqrt(std::max(0.0, sum2 / n - st.reward_mean * st.reward_mean));
  }
  st.n_train = train_idx.size();
  st.n_test = test_idx.size();
  return st;
}

namespace {
int preferred_action(const Env& env, int stage, int tier) {
  const int cnt = env.actions().count(stage);
  const int tiers = env.config().n_tiers;
  if (cnt == 1 || tiers == 1) return 0;
  const double frac = static_cast<double>(tier) / (tiers - 1);
  return static_cast<int>(std::lround(frac * (cnt - 1)));
}
}  // namespace

LoggedDataset build_logged_dataset(const Env& env, LoggingPolicy policy, std::size_t n_requests,
                                   std::uint64_t seed, double epsilon, double test_fraction) {
  require(n_requests >= 1, "build_logged_dataset: n_requests must be >= 1");
  require(test_fraction > 0.0 && test_fraction < 1.0,
          "build_logged_dataset: test fraction must be in (0,1)");
  if (policy == LoggingPolicy::epsilon_mixture)
    require(epsilon > 0.0 && epsilon <= 1.0,
            "build_logged_dataset: epsilon_mixture needs epsilon > 0 or some joint actions "
            "have zero support");

  Rng req_rng(derive_seed(seed, "requests"));
  Rng pol_rng(derive_seed(seed, "policy"));
  Rng noise_rng(derive_seed(seed, "reward_noise"));

  LoggedDataset ds;
  ds.policy = to_string(policy);
  ds.policy_epsilon = policy == LoggingPolicy::epsilon_mixture ? epsilon : 1.0;
  ds.seed = seed;
  ds.env_hash = env.config().content_hash();
  ds.episodes.reserve(n_requests);

  // stratified split by value tier: within each tier stream, every request
  // whose tier-local ordinal crosses the fraction boundary goes to test
  std::vector<long> tier_counter(static_cast<std::size_t>(env.config().n_tiers), 0);

  for (std::size_t i = 0; i < n_requests; ++i) {
    RequestContext s = env.sample_request(req_rng);
    JointAction a{};
    for (int g = 0; g < kNumStages; ++g) {
      const int cnt = env.actions().count(g);
      if (policy == LoggingPolicy::uniform_random) {
        a[static_cast<std::size_t>(g)] =
            static_cast<int>(pol_rng.uniform_index(static_cast<std::uint64_t>(cnt)));
      } else {
        if (pol_rng.uniform() < epsilon) {
          a[static_cast<std::size_t>(g)] =
              static_cast<int>(pol_rng.uniform_index(static_cast<std::uint64_t>(cnt)));
        } else {
          a[static_cast<std::size_t>(g)] = preferred_action(env, g, s.value_tier);
        }
      }
    }
    ds.episodes.push_back(env.run_episode(s, a, noise_rng));

    long& c = tier_counter[static_cast<std::size_t>(s.value_tier)];
    const bool is_test = std::floor(static_cast<double>(c + 1) * test_fraction) >
                         std::floor(static_cast<double>(c) * test_fraction);
    ++c;
    if (is_test)
      ds.test_idx.push_back(i);
    else
      ds.train_idx.push_back(i);
  }
  return ds;
}

std::string serialize_ndjson(const LoggedDataset& ds) {
  std::string out;
  // header line carries the schema version and generation metadata
  {
    ordered_json h;
    h["schema"] = "marca-dataset";
    h["version"] = 1;
    h["policy"] = ds.policy;
    h["epsilon"] = ds.policy_epsilon;
    h["seed"] = ds.seed;
    h["env_hash"] = hash_hex(ds.env_hash);
    h["n"] = ds.episodes.size();
    out += h.dump();
    out += '\n';
  }
  std::vector<char> split(ds.episodes.size(), 't');
  for (std::size_t i : ds.test_idx) split[i] = 'e';
  for (std::size_t i = 0; i < ds.episodes.size(); ++i) {
    const auto& ep = ds.episodes[i];
    ordered_json j;
    j["f"] = ep.ctx.features;
    j["tier"] = ep.ctx.value_tier;
    j["ts"] = ep.ctx.timestamp_sec;
    j["plat"] = ep.ctx.platform_id;
    j["a"] = ep.actions;
    j["r"] = ep.reward;
    j["split"] = split[i] == 'e' ? "test" : "train";
    out += j.dump();
    out += '\n';
  }
  return out;
}

LoggedDataset parse_ndjson(const std::string& text, const Env& env) {
  LoggedDataset ds;
  std::size_t pos = 0;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line);
    if (!header_seen) {
      require(j.value("schema", "") == "marca-dataset", "dataset: missing schema header");
      require(j.value("version", 0) == 1, "dataset: unsupported schema version");
      ds.policy = j.value("policy", "");
      ds.policy_epsilon = j.value("epsilon", 0.0);
      ds.seed = j.value("seed", std::uint64_t{0});
      const std::string env_hash = j.value("env_hash", "");
      require(env_hash == hash_hex(env.config().content_hash()),
              "dataset: env config hash mismatch (dataset was generated for a different "
              "environment)");
      ds.env_hash = env.config().content_hash();
      header_seen = true;
      continue;
    }
    RequestContext s;
    s.features = j.at("f").get<std::vector<double>>();
    s.value_tier = j.at("tier").get<int>();
    s.timestamp_sec = j.at("ts").get<double>();
    s.platform_id = j.at("plat").get<int>();
    auto av = j.at("a").get<std::vector<int>>();
    require(av.size() == kNumStages, "dataset: bad action arity at line " + std::to_string(line_no));
    JointAction a{av[0], av[1], av[2]};
    // rebuild derived vectors, then restore the stored (noisy) reward
    Rng dummy(0);
    EpisodeRecord rec = env.run_episode(s, a, dummy);
    rec.reward = j.at("r").get<double>();
    const std::size_t idx = ds.episodes.size();
    if (j.at("split").get<std::string>() == "test")
      ds.test_idx.push_back(idx);
    else
      ds.train_idx.push_back(idx);
    ds.episodes.push_back(std::move(rec));
  }
  require(header_seen, "dataset: empty file");
  return ds;
}

void save_dataset(const LoggedDataset& ds, const std::filesystem::path& path) {
  io::atomic_write(path, serialize_ndjson(ds));
}

LoggedDataset load_dataset(const std::filesystem::path& path, const Env& env) {
  return parse_ndjson(io::read_file(path), env);
}

std::uint64_t dataset_content_hash(const LoggedDataset& ds) {
  return fnv1a64(serialize_ndjson(ds));
}

}  // namespace marca::env
