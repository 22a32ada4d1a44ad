#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dilemma/digest.hpp"
#include "dilemma/manifest.hpp"
#include "dilemma/prompt.hpp"
#include "dilemma/rng.hpp"
#include "dilemma/scenario.hpp"
#include "dilemma/toymodel.hpp"

namespace dilemma {

// Two-way softmax (Eq. 1 restricted to the choice tokens), max-subtracted so
// any finite logit pair is safe.
inline std::pair<double, double> binary_prob(double l1, double l2) {
  if (!(std::isfinite(l1) && std::isfinite(l2)))
    throw std::invalid_argument("binary_prob: non-finite logit");
  if (l1 >= l2) {
    double e = std::exp(l2 - l1);
    double p1 = 1.0 / (1.0 + e);
    return {p1, 1.0 - p1};
  }
  double e = std::exp(l1 - l2);
  double p2 = 1.0 / (1.0 + e);
  return {1.0 - p2, p2};
}

struct TokenLogit {
  std::string token;
  double value = 0.0;
  enum class Kind { raw_logit, logprob } kind = Kind::raw_logit;
};

inline const char* logit_kind_name(TokenLogit::Kind k) {
  return k == TokenLogit::Kind::raw_logit ? "raw-logit" : "logprob";
}

struct ChoiceRecord {
  std::string scenario_id;
  double p1 = 0.0;  // normalized over the two choice tokens
  double p2 = 0.0;
  double top_two_mass = 1.0;  // pre-normalization mass on the choice tokens
  double l1 = 0.0;
  double l2 = 0.0;
  TokenLogit::Kind logit_kind = TokenLogit::Kind::raw_logit;
  std::string backend_id;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;
  double latency_ms = 0.0;
};

struct BackendError : std::runtime_error {
  BackendError(std::string kind_, const std::string& message, int attempts_ = 1)
      : std::runtime_error(message), kind(std::move(kind_)), attempts(attempts_) {}
  std::string kind;  // "transport" | "tokens-not-in-topk" | "protocol"
  int attempts = 1;
};

struct BackendConfig {
  enum class Kind { http_completions, toy_transformer } kind =
      Kind::toy_transformer;
  std::string model_name = "toy-64x4x2";

  // http
  std::string endpoint;  // e.g. http://localhost:8000
  std::string api_path = "/v1/chat/completions";
  enum class ApiStyle { chat, completion } api_style = ApiStyle::chat;
  std::string api_key_env = "DILEMMA_API_KEY";
  int top_logprobs = 20;
  int max_retries = 3;
  double backoff_initial_ms = 250.0;
  int timeout_s = 30;

  // Recorded for provenance; logit extraction itself does not sample.
  double temperature = 0.0;
  double top_p = 1.0;

  // toy
  std::uint64_t toy_init_seed = 0x5eed;
  int toy_passes = 1;

  double dropout_rate = 0.0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["kind"] = kind == Kind::http_completions ? "http" : "toy";
    j["model_name"] = model_name;
    if (kind == Kind::http_completions) {
      j["endpoint"] = endpoint;
      j["api_path"] = api_path;
      j["api_style"] = api_style == ApiStyle::chat ? "chat" : "completion";
      j["api_key_env"] = api_key_env;
      j["top_logprobs"] = top_logprobs;
      j["max_retries"] = max_retries;
      j["timeout_s"] = timeout_s;
    } else {
      j["toy_init_seed"] = toy_init_seed;
      j["toy_passes"] = toy_passes;
    }
    j["temperature"] = temperature;
    j["top_p"] = top_p;
    j["dropout_rate"] = dropout_rate;
    return j;
  }

  static BackendConfig from_json(const nlohmann::ordered_json& j) {
    BackendConfig c;
    std::string kind = j.value("kind", "toy");
    c.kind = kind == "http" ? Kind::http_completions : Kind::toy_transformer;
    c.model_name = j.value("model_name", c.model_name);
    c.endpoint = j.value("endpoint", "");
    c.api_path = j.value("api_path", c.api_path);
    c.api_style = j.value("api_style", "chat") == std::string("completion")
                      ? ApiStyle::completion
                      : ApiStyle::chat;
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.top_logprobs = j.value("top_logprobs", c.top_logprobs);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    c.temperature = j.value("temperature", c.temperature);
    c.top_p = j.value("top_p", c.top_p);
    c.toy_init_seed = j.value("toy_init_seed", c.toy_init_seed);
    c.toy_passes = j.value("toy_passes", c.toy_passes);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    return c;
  }

  std::string digest() const { return digest_string(to_json().dump()); }
  std::string id() const {
    return (kind == Kind::http_completions ? std::string("http:")
                                           : std::string("toy:")) +
           model_name + "@" + digest();
  }
};

class Backend {
 public:
  virtual ~Backend() = default;
  // Must be safe to call concurrently.
  virtual ChoiceRecord evaluate(const PromptBundle& prompt,
                                std::uint64_t seed) const = 0;
  virtual std::string id() const = 0;
};

// ---------------------------------------------------------------------------
// Toy backend: seeded transformer logits, dropout noise keyed by the
// per-scenario seed.
// ---------------------------------------------------------------------------

class ToyBackend : public Backend {
 public:
  explicit ToyBackend(BackendConfig config)
      : cfg_(std::move(config)),
        model_(toy::ToyConfig{.init_seed = cfg_.toy_init_seed}) {}

  ToyBackend(BackendConfig config, toy::ToyConfig model_config)
      : cfg_(std::move(config)), model_(model_config) {}

  const toy::ToyTransformer& model() const { return model_; }

  ChoiceRecord evaluate(const PromptBundle& prompt,
                        std::uint64_t seed) const override {
    auto t0 = std::chrono::steady_clock::now();
    std::string text =
        prompt.system + "\n\n" + prompt.user + "\n\n" + prompt.assistant_prefix;
    std::vector<int> ids = model_.tokenize(text);
    int id1 = model_.token_id(prompt.choice_tokens[0]);
    int id2 = model_.token_id(prompt.choice_tokens[1]);

    int passes = std::max(1, cfg_.toy_passes);
    double sum_p1 = 0.0, sum_mass = 0.0, first_l1 = 0.0, first_l2 = 0.0;
    for (int pass = 0; pass < passes; ++pass) {
      toy::DropoutSpec spec;
      spec.rate = cfg_.dropout_rate;
      spec.noise_seed = pass == 0 ? seed : derive_seed(seed, "pass", pass);
      Eigen::VectorXd logits = model_.forward_logits(ids, spec);
      double l1 = logits(id1), l2 = logits(id2);
      auto [p1, p2] = binary_prob(l1, l2);
      sum_p1 += p1;
      // Full-vocabulary softmax mass on the two choice tokens.
      double m = logits.maxCoeff();
      double z = (logits.array() - m).exp().sum();
      sum_mass += (std::exp(l1 - m) + std::exp(l2 - m)) / z;
      if (pass == 0) {
        first_l1 = l1;
        first_l2 = l2;
      }
    }

    ChoiceRecord rec;
    rec.p1 = sum_p1 / passes;
    rec.p2 = 1.0 - rec.p1;
    rec.top_two_mass = sum_mass / passes;
    rec.l1 = first_l1;
    rec.l2 = first_l2;
    rec.logit_kind = TokenLogit::Kind::raw_logit;
    rec.backend_id = id();
    rec.dropout_rate = cfg_.dropout_rate;
    rec.seed = seed;
    rec.latency_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    return rec;
  }

  std::string id() const override { return cfg_.id(); }

 private:
  BackendConfig cfg_;
  toy::ToyTransformer model_;
};

// ---------------------------------------------------------------------------
// HTTP backend: OpenAI-style chat/completions endpoints returning top
// logprobs at the first generated position.
// ---------------------------------------------------------------------------

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(BackendConfig config) : cfg_(std::move(config)) {
    if (cfg_.endpoint.empty())
      throw std::invalid_argument("HttpBackend: empty endpoint");
  }

  ChoiceRecord evaluate(const PromptBundle& prompt,
                        std::uint64_t seed) const override {
    auto t0 = std::chrono::steady_clock::now();
    std::string body = request_body(prompt, seed);

    int attempts = 0;
    std::string last_error;
    while (attempts < std::max(1, cfg_.max_retries)) {
      ++attempts;
      auto outcome = post_once(body);
      if (outcome.retryable) {
        last_error = outcome.error;
        std::this_thread::sleep_for(std::chrono::milliseconds(
            static_cast<long>(cfg_.backoff_initial_ms * (1 << (attempts - 1)))));
        continue;
      }
      if (!outcome.error.empty())
        throw BackendError("protocol", outcome.error, attempts);
      ChoiceRecord rec = parse_response(outcome.body, prompt, attempts);
      rec.backend_id = id();
      rec.dropout_rate = cfg_.dropout_rate;
      rec.seed = seed;
      rec.latency_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
      return rec;
    }
    throw BackendError("transport", "transport failure after " +
                                        std::to_string(attempts) +
                                        " attempts: " + last_error,
                       attempts);
  }

  std::string id() const override { return cfg_.id(); }

 private:
  struct PostOutcome {
    std::string body;
    std::string error;
    bool retryable = false;
  };

  std::string request_body(const PromptBundle& prompt, std::uint64_t seed) const {
    nlohmann::ordered_json j;
    j["model"] = cfg_.model_name;
    if (cfg_.api_style == BackendConfig::ApiStyle::chat) {
      j["messages"] = nlohmann::ordered_json::array(
          {{{"role", "system"}, {"content", prompt.system}},
           {{"role", "user"}, {"content", prompt.user}},
           {{"role", "assistant"}, {"content", prompt.assistant_prefix}}});
      j["logprobs"] = true;
      j["top_logprobs"] = cfg_.top_logprobs;
    } else {
      j["prompt"] = prompt.system + "\n\n" + prompt.user + "\n\n" +
                    prompt.assistant_prefix;
      j["logprobs"] = cfg_.top_logprobs;
    }
    j["max_tokens"] = 1;
    j["temperature"] = cfg_.temperature;
    j["top_p"] = cfg_.top_p;
    j["seed"] = seed;
    return j.dump();
  }

  // One POST; a fresh client per call keeps evaluate() thread-safe.
  PostOutcome post_once(const std::string& body) const {
    httplib::Client client(cfg_.endpoint);
    client.set_connection_timeout(cfg_.timeout_s);
    client.set_read_timeout(cfg_.timeout_s);
    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()))
      headers.emplace("Authorization", std::string("Bearer ") + key);
    auto res = client.Post(cfg_.api_path, headers, body, "application/json");
    PostOutcome out;
    if (!res) {
      out.error = "connection error: " + httplib::to_string(res.error());
      out.retryable = true;
      return out;
    }
    if (res->status >= 500 || res->status == 429) {
      out.error = "server status " + std::to_string(res->status);
      out.retryable = true;
      return out;
    }
    if (res->status != 200) {
      out.error = "unexpected status " + std::to_string(res->status) + ": " +
                  res->body;
      return out;
    }
    out.body = res->body;
    return out;
  }

  // Accepts the exact token or a single-leading-space variant; returns the
  // highest-probability match.
  static std::optional<double> match_token(
      const std::vector<std::pair<std::string, double>>& candidates,
      const std::string& target) {
    std::optional<double> best;
    for (const auto& [token, logprob] : candidates) {
      if (token == target || token == " " + target) {
        if (!best || logprob > *best) best = logprob;
      }
    }
    return best;
  }

  ChoiceRecord parse_response(const std::string& body,
                              const PromptBundle& prompt, int attempts) const {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const std::exception& e) {
      throw BackendError("protocol", std::string("malformed JSON: ") + e.what(),
                         attempts);
    }
    std::vector<std::pair<std::string, double>> candidates;
    try {
      const auto& choice = j.at("choices").at(0);
      if (cfg_.api_style == BackendConfig::ApiStyle::chat) {
        const auto& top =
            choice.at("logprobs").at("content").at(0).at("top_logprobs");
        for (const auto& entry : top)
          candidates.emplace_back(entry.at("token").get<std::string>(),
                                  entry.at("logprob").get<double>());
      } else {
        const auto& top = choice.at("logprobs").at("top_logprobs").at(0);
        for (auto it = top.begin(); it != top.end(); ++it)
          candidates.emplace_back(it.key(), it.value().get<double>());
      }
    } catch (const std::exception& e) {
      throw BackendError("protocol",
                         std::string("unexpected response shape: ") + e.what(),
                         attempts);
    }

    auto lp1 = match_token(candidates, prompt.choice_tokens[0]);
    auto lp2 = match_token(candidates, prompt.choice_tokens[1]);
    if (!lp1 || !lp2) {
      std::string have;
      for (const auto& [token, lp] : candidates) {
        if (!have.empty()) have += ", ";
        have += "'" + token + "'";
      }
      throw BackendError("tokens-not-in-topk",
                         "choice tokens missing from returned top-k: [" + have +
                             "]",
                         attempts);
    }

    // Logprobs exponentiate to probabilities; renormalizing over the two
    // choice tokens is Eq. 1 restricted to them.
    double q1 = std::exp(*lp1), q2 = std::exp(*lp2);
    ChoiceRecord rec;
    rec.top_two_mass = q1 + q2;
    rec.p1 = q1 / (q1 + q2);
    rec.p2 = 1.0 - rec.p1;
    rec.l1 = *lp1;
    rec.l2 = *lp2;
    rec.logit_kind = TokenLogit::Kind::logprob;
    return rec;
  }

  BackendConfig cfg_;
};

inline std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
  if (config.kind == BackendConfig::Kind::http_completions)
    return std::make_unique<HttpBackend>(config);
  return std::make_unique<ToyBackend>(config);
}

// ---------------------------------------------------------------------------
// Record serialization.
// ---------------------------------------------------------------------------

inline ordered_json record_to_json(const ChoiceRecord& r) {
  ordered_json j;
  j["v"] = kSchemaVersion;
  j["scenario_id"] = r.scenario_id;
  j["p1"] = r.p1;
  j["p2"] = r.p2;
  j["top_two_mass"] = r.top_two_mass;
  j["l1"] = r.l1;
  j["l2"] = r.l2;
  j["logit_kind"] = logit_kind_name(r.logit_kind);
  j["backend_id"] = r.backend_id;
  j["dropout_rate"] = r.dropout_rate;
  j["seed"] = r.seed;
  j["latency_ms"] = r.latency_ms;
  return j;
}

inline ChoiceRecord record_from_json(const ordered_json& j) {
  ChoiceRecord r;
  r.scenario_id = j.at("scenario_id").get<std::string>();
  r.p1 = j.at("p1").get<double>();
  r.p2 = j.at("p2").get<double>();
  r.top_two_mass = j.at("top_two_mass").get<double>();
  r.l1 = j.value("l1", 0.0);
  r.l2 = j.value("l2", 0.0);
  r.logit_kind = j.value("logit_kind", "raw-logit") == std::string("logprob")
                     ? TokenLogit::Kind::logprob
                     : TokenLogit::Kind::raw_logit;
  r.backend_id = j.value("backend_id", "");
  r.dropout_rate = j.value("dropout_rate", 0.0);
  r.seed = j.value("seed", std::uint64_t{0});
  r.latency_ms = j.value("latency_ms", 0.0);
  return r;
}

inline void write_records_file(const std::string& path,
                               const std::vector<ChoiceRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write records: " + path);
  for (const auto& r : records) out << record_to_json(r).dump() << "\n";
}

inline std::vector<ChoiceRecord> read_records_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read records: " + path);
  std::vector<ChoiceRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    records.push_back(record_from_json(ordered_json::parse(line)));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Corpus runner.
// ---------------------------------------------------------------------------

struct RunError {
  std::string scenario_id;
  std::string kind;
  std::string message;
  int attempts = 1;
};

struct RunOptions {
  PromptStyle style = PromptStyle::case_style;
  int concurrency = 1;
  std::uint64_t seed = 0;
  double error_threshold = 0.05;  // run fails above this error fraction
  std::string cache_dir;          // empty: no cache
  std::string command;            // provenance only
};

struct RunResult {
  std::vector<ChoiceRecord> records;
  std::vector<RunError> errors;
  RunManifest manifest;
  bool failed = false;
  bool cache_hit = false;
};

inline std::string corpus_digest_of(const std::vector<Scenario>& scenarios) {
  std::ostringstream ss;
  write_corpus(ss, scenarios);
  return digest_string(ss.str());
}

// One record per scenario. Per-scenario seeds derive from (seed, scenario
// id), so results do not depend on completion order or concurrency.
inline RunResult run_corpus(const std::vector<Scenario>& scenarios,
                            const Backend& backend, const BackendConfig& config,
                            const RunOptions& opts) {
  RunResult result;
  std::string corpus_digest = corpus_digest_of(scenarios);
  std::string style_name = prompt_style_name(opts.style);

  std::string cache_key;
  std::filesystem::path cache_file;
  if (!opts.cache_dir.empty()) {
    cache_key = digest_string(corpus_digest + "|" + config.digest() + "|" +
                              style_name + "|" + std::to_string(opts.seed));
    cache_file = std::filesystem::path(opts.cache_dir) /
                 (cache_key + ".records.jsonl");
    if (std::filesystem::exists(cache_file)) {
      result.records = read_records_file(cache_file.string());
      result.cache_hit = result.records.size() == scenarios.size();
      if (!result.cache_hit) result.records.clear();
    }
  }

  std::vector<std::optional<ChoiceRecord>> slots(scenarios.size());
  std::mutex error_mutex;
  if (!result.cache_hit && !scenarios.empty()) {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= scenarios.size()) return;
        const Scenario& s = scenarios[i];
        std::uint64_t scenario_seed = derive_seed(opts.seed, s.id);
        try {
          PromptBundle bundle = render(s, opts.style);
          ChoiceRecord rec = backend.evaluate(bundle, scenario_seed);
          rec.scenario_id = s.id;
          slots[i] = std::move(rec);
        } catch (const BackendError& e) {
          std::lock_guard<std::mutex> lock(error_mutex);
          result.errors.push_back({s.id, e.kind, e.what(), e.attempts});
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(error_mutex);
          result.errors.push_back({s.id, "invariant", e.what(), 1});
        }
      }
    };
    int threads = std::max(1, opts.concurrency);
    if (threads == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    for (auto& slot : slots)
      if (slot) result.records.push_back(std::move(*slot));
  }

  std::sort(result.errors.begin(), result.errors.end(),
            [](const RunError& a, const RunError& b) {
              return a.scenario_id < b.scenario_id;
            });

  result.failed =
      !scenarios.empty() &&
      static_cast<double>(result.errors.size()) >
          opts.error_threshold * static_cast<double>(scenarios.size());

  if (!cache_file.empty() && !result.cache_hit && !result.failed &&
      result.errors.empty()) {
    std::filesystem::create_directories(cache_file.parent_path());
    write_records_file(cache_file.string(), result.records);
  }

  RunManifest& m = result.manifest;
  m.kind = "records";
  m.command = opts.command;
  m.template_version = kTemplateVersion;
  m.style = style_name;
  m.corpus_digest = corpus_digest;
  m.corpus_count = scenarios.size();
  m.backend = config.to_json();
  m.backend_digest = config.digest();
  m.dropout_rate = config.dropout_rate;
  m.seed = opts.seed;
  m.concurrency = opts.concurrency;
  m.error_count = result.errors.size();
  for (const auto& e : result.errors) m.errors_by_kind[e.kind]++;
  if (result.cache_hit) m.notes.push_back("cache-hit: " + cache_key);
  if (!scenarios.empty() && scenarios.front().corpus == CorpusKind::alignment)
    m.notes.push_back(
        "alignment-set scored with the single-token method; the multi-token "
        "generation protocol is out of scope");
  return result;
}

}  // namespace dilemma
