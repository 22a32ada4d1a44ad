#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dilemma/digest.hpp"
#include "dilemma/version.hpp"

namespace dilemma {

inline std::string utc_now_iso8601() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec);
  return std::string(buf);
}

// Full provenance of one pipeline step. Result files bind to their manifest
// by the <output>.manifest.json naming convention; the manifest records each
// output's digest so consistency is recomputable.
struct RunManifest {
  std::string kind;  // "corpus" | "records" | "analysis" | "amce" | "report"
  std::string tool_version = kToolVersion;
  std::string command;
  std::string created_utc = utc_now_iso8601();

  std::string template_version;
  std::string style;
  std::string corpus_path;
  std::string corpus_digest;
  std::size_t corpus_count = 0;

  nlohmann::ordered_json backend;  // config snapshot (no secrets)
  std::string backend_digest;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;
  int concurrency = 1;

  std::size_t error_count = 0;
  std::map<std::string, std::size_t> errors_by_kind;

  std::vector<std::string> notes;
  std::map<std::string, std::string> outputs;  // path -> digest

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["kind"] = kind;
    j["tool_version"] = tool_version;
    j["command"] = command;
    j["created_utc"] = created_utc;
    if (!template_version.empty()) j["template_version"] = template_version;
    if (!style.empty()) j["style"] = style;
    if (!corpus_path.empty()) j["corpus_path"] = corpus_path;
    if (!corpus_digest.empty()) j["corpus_digest"] = corpus_digest;
    if (corpus_count) j["corpus_count"] = corpus_count;
    if (!backend.is_null()) {
      j["backend"] = backend;
      j["backend_digest"] = backend_digest;
      j["dropout_rate"] = dropout_rate;
    }
    j["seed"] = seed;
    j["concurrency"] = concurrency;
    j["errors"] = {{"count", error_count}, {"by_kind", errors_by_kind}};
    j["notes"] = notes;
    j["outputs"] = outputs;
    return j;
  }

  static RunManifest from_json(const nlohmann::ordered_json& j) {
    RunManifest m;
    m.kind = j.value("kind", "");
    m.tool_version = j.value("tool_version", "");
    m.command = j.value("command", "");
    m.created_utc = j.value("created_utc", "");
    m.template_version = j.value("template_version", "");
    m.style = j.value("style", "");
    m.corpus_path = j.value("corpus_path", "");
    m.corpus_digest = j.value("corpus_digest", "");
    m.corpus_count = j.value("corpus_count", std::size_t{0});
    if (j.contains("backend")) {
      m.backend = j.at("backend");
      m.backend_digest = j.value("backend_digest", "");
      m.dropout_rate = j.value("dropout_rate", 0.0);
    }
    m.seed = j.value("seed", std::uint64_t{0});
    m.concurrency = j.value("concurrency", 1);
    if (j.contains("errors")) {
      m.error_count = j["errors"].value("count", std::size_t{0});
      if (j["errors"].contains("by_kind"))
        m.errors_by_kind =
            j["errors"]["by_kind"].get<std::map<std::string, std::size_t>>();
    }
    if (j.contains("notes")) m.notes = j["notes"].get<std::vector<std::string>>();
    if (j.contains("outputs"))
      m.outputs = j["outputs"].get<std::map<std::string, std::string>>();
    return m;
  }

  void add_output(const std::string& path) { outputs[path] = digest_file(path); }

  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << to_json().dump(2) << "\n";
  }

  static RunManifest read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read manifest: " + path);
    nlohmann::ordered_json j;
    in >> j;
    return from_json(j);
  }
};

inline std::string manifest_path_for(const std::string& output_path) {
  return output_path + ".manifest.json";
}

}  // namespace dilemma
