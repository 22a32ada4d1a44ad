#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "dilemma/backend.hpp"
#include "dilemma/summarize.hpp"
#include "golden_scenarios.hpp"

using namespace dilemma;

TEST_CASE("binary_prob spot values") {
  auto [a1, a2] = binary_prob(0.0, 0.0);
  CHECK(a1 == 0.5);
  CHECK(a2 == 0.5);
  auto [b1, b2] = binary_prob(2.0, 0.0);
  CHECK_THAT(b1, Catch::Matchers::WithinAbs(0.8808, 1e-4));
  CHECK_THAT(b2, Catch::Matchers::WithinAbs(0.1192, 1e-4));
  auto [c1, c2] = binary_prob(1000.0, 0.0);
  CHECK(c1 == 1.0);
  CHECK(c2 == 0.0);
  auto [d1, d2] = binary_prob(-350.0, 350.0);
  CHECK(d1 == 0.0);
  CHECK(d2 == 1.0);
  CHECK_THROWS_AS(binary_prob(std::nan(""), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(binary_prob(0.0, INFINITY), std::invalid_argument);
}

TEST_CASE("binary_prob properties over random logit pairs") {
  SplitMix64 rng(31337);
  for (int i = 0; i < 10000; ++i) {
    double l1 = (rng.uniform01() - 0.5) * 1400.0;
    double l2 = (rng.uniform01() - 0.5) * 1400.0;
    auto [p1, p2] = binary_prob(l1, l2);
    CHECK(std::fabs(p1 + p2 - 1.0) <= 1e-12);
    auto [q1, q2] = binary_prob(l2, l1);
    CHECK(p1 == q2);
    CHECK(p2 == q1);
    double c = (rng.uniform01() - 0.5) * 200.0;
    auto [s1, s2] = binary_prob(l1 + c, l2 + c);
    CHECK(std::fabs(s1 - p1) <= 1e-12);
    (void)s2;
  }
}

TEST_CASE("toy backend is deterministic per (prompt, seed)") {
  BackendConfig cfg;
  cfg.kind = BackendConfig::Kind::toy_transformer;
  cfg.dropout_rate = 0.0;
  ToyBackend backend(cfg);
  PromptBundle bundle =
      render(testing::golden_scenario(Dimension::age), PromptStyle::case_style);
  ChoiceRecord a = backend.evaluate(bundle, 5);
  ChoiceRecord b = backend.evaluate(bundle, 5);
  CHECK(a.p1 == b.p1);
  CHECK(a.l1 == b.l1);
  CHECK(a.top_two_mass == b.top_two_mass);
  CHECK(a.top_two_mass >= 0.0);
  CHECK(a.top_two_mass <= 1.0);

  BackendConfig noisy = cfg;
  noisy.dropout_rate = 0.1;
  ToyBackend nb(noisy);
  ChoiceRecord n1 = nb.evaluate(bundle, 5);
  ChoiceRecord n2 = nb.evaluate(bundle, 6);
  CHECK(n1.p1 != n2.p1);  // different noise seeds move the logits
}

TEST_CASE("toy backend honors option-style choice tokens") {
  BackendConfig cfg;
  ToyBackend backend(cfg);
  PromptBundle bundle = render(testing::golden_scenario(Dimension::gender),
                               PromptStyle::option_style);
  ChoiceRecord rec = backend.evaluate(bundle, 1);
  CHECK(rec.p1 + rec.p2 == Catch::Approx(1.0).margin(1e-12));
}

namespace {

// Minimal OpenAI-style server fixture.
class LocalServer {
 public:
  explicit LocalServer(
      std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~LocalServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port_);
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string chat_logprob_body(
    const std::vector<std::pair<std::string, double>>& top) {
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (const auto& [token, lp] : top)
    entries.push_back({{"token", token}, {"logprob", lp}});
  nlohmann::ordered_json j;
  j["choices"] = {{{"message", {{"role", "assistant"}, {"content", "1"}}},
                   {"logprobs",
                    {{"content",
                      {{{"token", "1"},
                        {"logprob", -0.5},
                        {"top_logprobs", entries}}}}}}}};
  return j.dump();
}

BackendConfig http_config(const std::string& endpoint) {
  BackendConfig cfg;
  cfg.kind = BackendConfig::Kind::http_completions;
  cfg.endpoint = endpoint;
  cfg.model_name = "test-model";
  cfg.max_retries = 3;
  cfg.backoff_initial_ms = 5.0;
  cfg.timeout_s = 5;
  return cfg;
}

}  // namespace

TEST_CASE("http backend renormalizes returned logprobs over the choice tokens") {
  LocalServer server([](const httplib::Request& req, httplib::Response& res) {
    auto j = nlohmann::json::parse(req.body);
    REQUIRE(j.at("max_tokens") == 1);
    REQUIRE(j.at("messages").size() == 3);
    REQUIRE(j.at("messages")[2].at("content") == "Case");
    res.set_content(chat_logprob_body({{"1", std::log(0.6)},
                                       {"2", std::log(0.3)},
                                       {"3", std::log(0.1)}}),
                    "application/json");
  });
  HttpBackend backend(http_config(server.endpoint()));
  PromptBundle bundle =
      render(testing::golden_scenario(Dimension::age), PromptStyle::case_style);
  ChoiceRecord rec = backend.evaluate(bundle, 0);
  CHECK_THAT(rec.p1, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-9));
  CHECK_THAT(rec.p2, Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-9));
  CHECK_THAT(rec.top_two_mass, Catch::Matchers::WithinAbs(0.9, 1e-9));
  CHECK(rec.logit_kind == TokenLogit::Kind::logprob);
}

TEST_CASE("http backend accepts leading-space token variants") {
  LocalServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content(chat_logprob_body({{" 1", std::log(0.5)},
                                       {" 2", std::log(0.25)},
                                       {"x", std::log(0.25)}}),
                    "application/json");
  });
  HttpBackend backend(http_config(server.endpoint()));
  PromptBundle bundle =
      render(testing::golden_scenario(Dimension::law), PromptStyle::case_style);
  ChoiceRecord rec = backend.evaluate(bundle, 0);
  CHECK_THAT(rec.p1, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-9));
}

TEST_CASE("http backend reports tokens missing from the top-k") {
  LocalServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content(chat_logprob_body({{"yes", std::log(0.9)},
                                       {"no", std::log(0.1)}}),
                    "application/json");
  });
  HttpBackend backend(http_config(server.endpoint()));
  PromptBundle bundle = render(testing::golden_scenario(Dimension::species),
                               PromptStyle::case_style);
  try {
    backend.evaluate(bundle, 0);
    FAIL("expected tokens-not-in-topk");
  } catch (const BackendError& e) {
    CHECK(e.kind == "tokens-not-in-topk");
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("yes"));
  }
}

TEST_CASE("http backend rejects malformed responses as protocol errors") {
  LocalServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json at all", "application/json");
  });
  HttpBackend backend(http_config(server.endpoint()));
  PromptBundle bundle =
      render(testing::golden_scenario(Dimension::age), PromptStyle::case_style);
  try {
    backend.evaluate(bundle, 0);
    FAIL("expected protocol error");
  } catch (const BackendError& e) {
    CHECK(e.kind == "protocol");
  }
}

TEST_CASE("http backend retries transient server failures") {
  std::atomic<int> calls{0};
  LocalServer server([&calls](const httplib::Request&, httplib::Response& res) {
    int n = ++calls;
    if (n < 3) {
      res.status = 503;
      res.set_content("busy", "text/plain");
      return;
    }
    res.set_content(chat_logprob_body({{"1", std::log(0.7)},
                                       {"2", std::log(0.2)}}),
                    "application/json");
  });
  HttpBackend backend(http_config(server.endpoint()));
  PromptBundle bundle =
      render(testing::golden_scenario(Dimension::age), PromptStyle::case_style);
  ChoiceRecord rec = backend.evaluate(bundle, 0);
  CHECK(calls.load() == 3);
  CHECK_THAT(rec.p1, Catch::Matchers::WithinAbs(7.0 / 9.0, 1e-9));
}

TEST_CASE("http backend surfaces transport failure with the attempt count") {
  BackendConfig cfg = http_config("http://127.0.0.1:1");  // nothing listens
  cfg.max_retries = 2;
  HttpBackend backend(cfg);
  PromptBundle bundle =
      render(testing::golden_scenario(Dimension::age), PromptStyle::case_style);
  try {
    backend.evaluate(bundle, 0);
    FAIL("expected transport error");
  } catch (const BackendError& e) {
    CHECK(e.kind == "transport");
    CHECK(e.attempts == 2);
  }
}

TEST_CASE("run_corpus is order- and concurrency-insensitive") {
  auto scenarios = generate_uncertainty_set(1, 1);  // 9 scenarios
  BackendConfig cfg;
  cfg.dropout_rate = 0.05;
  ToyBackend backend(cfg);
  RunOptions opts;
  opts.seed = 12;
  opts.concurrency = 1;
  RunResult serial = run_corpus(scenarios, backend, cfg, opts);
  opts.concurrency = 8;
  RunResult parallel = run_corpus(scenarios, backend, cfg, opts);
  REQUIRE(serial.records.size() == 9);
  REQUIRE(parallel.records.size() == 9);
  std::ostringstream a, b;
  for (const auto& r : serial.records) a << record_to_json(r).dump() << "\n";
  for (const auto& r : parallel.records) b << record_to_json(r).dump() << "\n";
  CHECK(a.str() == b.str());
  CHECK_FALSE(serial.failed);
  CHECK(serial.manifest.corpus_count == 9);
  CHECK(serial.manifest.error_count == 0);
}

TEST_CASE("run_corpus on an empty corpus yields a valid manifest") {
  BackendConfig cfg;
  ToyBackend backend(cfg);
  RunResult res = run_corpus({}, backend, cfg, RunOptions{});
  CHECK(res.records.empty());
  CHECK_FALSE(res.failed);
  CHECK(res.manifest.corpus_count == 0);
}

TEST_CASE("run_corpus collects failures into the error ledger") {
  auto scenarios = generate_uncertainty_set(3, 12);  // 108 scenarios
  scenarios.resize(100);
  std::set<std::string> fail_ids = {scenarios[3].id, scenarios[40].id,
                                    scenarios[77].id};

  // Faults are injected by seed: run_corpus derives each scenario's seed
  // from (run seed, scenario id), so the failing subset is deterministic.
  struct SeedFaultBackend : Backend {
    std::set<std::uint64_t> bad_seeds;
    ToyBackend inner{BackendConfig{}};
    ChoiceRecord evaluate(const PromptBundle& p, std::uint64_t s) const override {
      if (bad_seeds.count(s))
        throw BackendError("transport", "injected transport fault", 3);
      return inner.evaluate(p, s);
    }
    std::string id() const override { return inner.id(); }
  };

  SeedFaultBackend backend;
  RunOptions opts;
  opts.seed = 5;
  for (const auto& id : fail_ids) backend.bad_seeds.insert(derive_seed(5, id));

  SECTION("threshold above the error fraction: run survives") {
    opts.error_threshold = 0.05;
    RunResult res = run_corpus(scenarios, backend, BackendConfig{}, opts);
    CHECK(res.records.size() == 97);
    REQUIRE(res.errors.size() == 3);
    CHECK_FALSE(res.failed);
    CHECK(res.manifest.errors_by_kind.at("transport") == 3);
    for (const auto& e : res.errors) {
      CHECK(fail_ids.count(e.scenario_id) == 1);
      CHECK(e.attempts == 3);
    }
  }

  SECTION("threshold below the error fraction: run fails") {
    opts.error_threshold = 0.02;
    RunResult res = run_corpus(scenarios, backend, BackendConfig{}, opts);
    CHECK(res.failed);
    CHECK(res.errors.size() == 3);
  }
}

TEST_CASE("run_corpus cache makes reruns free and identical") {
  auto scenarios = generate_uncertainty_set(9, 2);
  BackendConfig cfg;
  cfg.dropout_rate = 0.1;
  ToyBackend backend(cfg);
  auto cache_dir = std::filesystem::temp_directory_path() / "dilemma_cache_test";
  std::filesystem::remove_all(cache_dir);
  RunOptions opts;
  opts.seed = 3;
  opts.cache_dir = cache_dir.string();

  RunResult first = run_corpus(scenarios, backend, cfg, opts);
  CHECK_FALSE(first.cache_hit);
  RunResult second = run_corpus(scenarios, backend, cfg, opts);
  CHECK(second.cache_hit);
  REQUIRE(first.records.size() == second.records.size());
  for (std::size_t i = 0; i < first.records.size(); ++i)
    CHECK(record_to_json(first.records[i]).dump() ==
          record_to_json(second.records[i]).dump());
  std::filesystem::remove_all(cache_dir);
}

TEST_CASE("records file round trip") {
  auto scenarios = generate_uncertainty_set(2, 1);
  BackendConfig cfg;
  ToyBackend backend(cfg);
  RunOptions opts;
  RunResult res = run_corpus(scenarios, backend, cfg, opts);
  auto path = std::filesystem::temp_directory_path() / "dilemma_records.jsonl";
  write_records_file(path.string(), res.records);
  auto loaded = read_records_file(path.string());
  std::filesystem::remove(path);
  REQUIRE(loaded.size() == res.records.size());
  for (std::size_t i = 0; i < loaded.size(); ++i)
    CHECK(record_to_json(loaded[i]).dump() ==
          record_to_json(res.records[i]).dump());
}

TEST_CASE("summaries group focal probabilities by dimension") {
  auto scenarios = generate_uncertainty_set(4, 10);
  BackendConfig cfg;
  ToyBackend backend(cfg);
  RunOptions opts;
  RunResult res = run_corpus(scenarios, backend, cfg, opts);
  auto summaries = summarize_records(scenarios, res.records, "toy", 0.0);
  REQUIRE(summaries.size() == 10);  // 9 dimensions + pooled "all"
  for (const auto& s : summaries) {
    if (s.dimension == "all") {
      CHECK(s.n == 90);
    } else {
      CHECK(s.n == 10);
    }
    CHECK(s.total_entropy >= s.mutual_information);
    CHECK(std::fabs(s.total_entropy - s.conditional_entropy -
                    s.mutual_information) <= 1e-12);
  }
}
