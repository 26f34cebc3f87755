#pragma once

// Engine configuration file (JSON). Every section and key is optional; absent
// keys keep their defaults. Relative paths are resolved against the current
// directory, not the config file.

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "sse/objective/train.hpp"

namespace sse::app {

inline constexpr std::size_t kDefaultMaxUpload = 32u << 20;

struct PathsConfig {
  std::filesystem::path manifest;
  std::filesystem::path model = "model.sse";
  std::filesystem::path embeddings = "embeddings.ssem";
  std::filesystem::path index = "index.ssix";
  std::filesystem::path corpus = "corpus";
};

struct ServiceConfig {
  std::string bind = "127.0.0.1";
  int port = 8080;
  std::size_t max_upload_bytes = kDefaultMaxUpload;
  std::size_t default_k = 10;
  std::size_t max_k = 100;
};

/// `seed` drives every stochastic step (corpus synthesis, clip sampling,
/// initialization, minibatches); train.seed always equals it.
struct EngineConfig {
  PathsConfig paths;
  nn::EncoderArch arch;
  objective::TrainConfig train;  // train.chain mirrors the top-level "chain" section
  ServiceConfig service;
  std::uint64_t seed = 0;
};

inline void validate(const EngineConfig& c) {
  nn::validate(c.arch);
  objective::validate(c.train);
  require(c.service.port >= 1 && c.service.port <= 65535, ErrorCode::InvalidConfig, "service port out of range");
  require(c.service.max_upload_bytes > 0, ErrorCode::InvalidConfig, "max upload size must be positive");
  require(c.service.default_k >= 1 && c.service.default_k <= c.service.max_k, ErrorCode::InvalidConfig,
          "default k must lie in [1, max_k]");
}

inline void to_json(nlohmann::json& j, const EngineConfig& c) {
  j = nlohmann::json{
      {"seed", c.seed},
      {"paths",
       {{"manifest", c.paths.manifest.generic_string()},
        {"model", c.paths.model.generic_string()},
        {"embeddings", c.paths.embeddings.generic_string()},
        {"index", c.paths.index.generic_string()},
        {"corpus", c.paths.corpus.generic_string()}}},
      {"arch", c.arch},
      {"train", c.train},
      {"chain", c.train.chain},
      {"service",
       {{"bind", c.service.bind},
        {"port", c.service.port},
        {"max_upload_bytes", c.service.max_upload_bytes},
        {"default_k", c.service.default_k},
        {"max_k", c.service.max_k}}}};
}

inline void from_json(const nlohmann::json& j, EngineConfig& c) {
  require(j.is_object(), ErrorCode::InvalidConfig, "config must be a JSON object");
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    auto path = [&p](const char* key, std::filesystem::path& field) {
      if (p.contains(key)) field = p.at(key).get<std::string>();
    };
    path("manifest", c.paths.manifest);
    path("model", c.paths.model);
    path("embeddings", c.paths.embeddings);
    path("index", c.paths.index);
    path("corpus", c.paths.corpus);
  }
  if (j.contains("arch")) {
    // "tiny" or a partial object overriding the default architecture.
    const auto& a = j.at("arch");
    if (a.is_string()) {
      require(a.get<std::string>() == "tiny", ErrorCode::InvalidConfig, "unknown arch preset " + a.dump());
      c.arch = nn::EncoderArch::tiny();
    } else {
      nlohmann::json merged = c.arch;
      merged.merge_patch(a);
      c.arch = merged.get<nn::EncoderArch>();
    }
  }
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("chain")) j.at("chain").get_to(c.train.chain);
  if (j.contains("seed")) {
    j.at("seed").get_to(c.seed);
  } else {
    c.seed = c.train.seed;
  }
  c.train.seed = c.seed;
  if (j.contains("service")) {
    const auto& s = j.at("service");
    auto get = [&s](const char* key, auto& field) {
      if (s.contains(key)) s.at(key).get_to(field);
    };
    get("bind", c.service.bind);
    get("port", c.service.port);
    get("max_upload_bytes", c.service.max_upload_bytes);
    get("default_k", c.service.default_k);
    get("max_k", c.service.max_k);
  }
}

inline EngineConfig parse_config(const std::string& text, const std::string& origin = "config") {
  EngineConfig c;
  try {
    c = nlohmann::json::parse(text).get<EngineConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, origin + ": " + e.what());
  }
  validate(c);
  return c;
}

inline EngineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoError, "cannot open config " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text, path.string());
}

}  // namespace sse::app
