#pragma once

// Run configuration: every tunable of the pipeline in one struct, with a
// JSON form (checkpoint headers, manifests) and a key = value text form
// (config files).

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "sketchlattice/decoder.hpp"
#include "sketchlattice/encoder.hpp"
#include "sketchlattice/error.hpp"
#include "sketchlattice/graph.hpp"
#include "sketchlattice/lattice.hpp"
#include "sketchlattice/optim.hpp"

namespace sketchlattice {

struct RunConfig {
  LatticeConfig lattice;
  GraphConfig graph;
  EncoderConfig encoder;
  DecoderConfig decoder;
  TrainConfig train;
};

inline void validate(const RunConfig& c) {
  validate(c.lattice);
  validate(c.graph);
  validate(c.encoder);
  validate(c.decoder);
  validate(c.train);
  if (c.lattice.side != c.encoder.side)
    fail(ErrorCode::InvalidConfig, "lattice and encoder side differ");
  if (c.graph.embed_mode != c.encoder.embed_mode)
    fail(ErrorCode::InvalidConfig, "graph and encoder embed modes differ");
}

namespace detail {

inline const char* name_of(EmbedMode m) { return m == EmbedMode::joint ? "joint" : "factorized"; }
inline const char* name_of(Proximity p) { return p == Proximity::nearest ? "nearest" : "nearby"; }
inline const char* name_of(Pooling p) { return p == Pooling::mean ? "mean" : "sum"; }
inline const char* name_of(ClipMode m) {
  return m == ClipMode::elementwise ? "elementwise" : "global_norm";
}

inline EmbedMode parse_embed_mode(const std::string& s) {
  if (s == "joint") return EmbedMode::joint;
  if (s == "factorized") return EmbedMode::factorized;
  fail(ErrorCode::InvalidConfig, "embed_mode must be joint or factorized, got " + s);
}
inline Proximity parse_proximity(const std::string& s) {
  if (s == "nearest") return Proximity::nearest;
  if (s == "nearby") return Proximity::nearby;
  fail(ErrorCode::InvalidConfig, "proximity must be nearest or nearby, got " + s);
}
inline Pooling parse_pooling(const std::string& s) {
  if (s == "mean") return Pooling::mean;
  if (s == "sum") return Pooling::sum;
  fail(ErrorCode::InvalidConfig, "pooling must be mean or sum, got " + s);
}
inline ClipMode parse_clip_mode(const std::string& s) {
  if (s == "elementwise") return ClipMode::elementwise;
  if (s == "global_norm") return ClipMode::global_norm;
  fail(ErrorCode::InvalidConfig, "clip_mode must be elementwise or global_norm, got " + s);
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  fail(ErrorCode::InvalidConfig, "expected a boolean, got " + s);
}

inline double parse_double(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::InvalidConfig, key + ": expected a number, got " + s);
}

inline long long parse_int(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::InvalidConfig, key + ": expected an integer, got " + s);
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  using detail::name_of;
  return {
      {"lattice", {{"n", c.lattice.n}, {"side", c.lattice.side}}},
      {"graph",
       {{"proximity", name_of(c.graph.proximity)},
        {"d_T", c.graph.distance_threshold},
        {"embed_mode", name_of(c.graph.embed_mode)},
        {"self_loops", c.graph.self_loops}}},
      {"encoder",
       {{"d", c.encoder.dim},
        {"K", c.encoder.layers},
        {"dropout", c.encoder.dropout},
        {"pooling", name_of(c.encoder.pooling)},
        {"embed_mode", name_of(c.encoder.embed_mode)},
        {"side", c.encoder.side},
        {"residual", c.encoder.residual},
        {"normalize_adjacency", c.encoder.normalize_adjacency},
        {"bn_momentum", c.encoder.bn_momentum},
        {"bn_eps", c.encoder.bn_eps}}},
      {"decoder",
       {{"hidden", c.decoder.hidden},
        {"M", c.decoder.mixtures},
        {"n_max", c.decoder.n_max},
        {"temperature", c.decoder.temperature},
        {"offset_scale", c.decoder.offset_scale}}},
      {"train",
       {{"lr", c.train.lr},
        {"decay", c.train.decay},
        {"beta1", c.train.beta1},
        {"beta2", c.train.beta2},
        {"eps", c.train.eps},
        {"clip", c.train.clip},
        {"clip_mode", name_of(c.train.clip_mode)},
        {"batch_size", c.train.batch_size},
        {"iterations", c.train.iterations},
        {"p_mask_train", c.train.p_mask_train},
        {"seed", c.train.seed},
        {"checkpoint_every", c.train.checkpoint_every}}},
  };
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    const auto& l = j.at("lattice");
    c.lattice.n = l.at("n").get<int>();
    c.lattice.side = l.at("side").get<int>();
    const auto& g = j.at("graph");
    c.graph.proximity = detail::parse_proximity(g.at("proximity").get<std::string>());
    c.graph.distance_threshold = g.at("d_T").get<double>();
    c.graph.embed_mode = detail::parse_embed_mode(g.at("embed_mode").get<std::string>());
    c.graph.self_loops = g.at("self_loops").get<bool>();
    const auto& e = j.at("encoder");
    c.encoder.dim = e.at("d").get<int>();
    c.encoder.layers = e.at("K").get<int>();
    c.encoder.dropout = e.at("dropout").get<double>();
    c.encoder.pooling = detail::parse_pooling(e.at("pooling").get<std::string>());
    c.encoder.embed_mode = detail::parse_embed_mode(e.at("embed_mode").get<std::string>());
    c.encoder.side = e.at("side").get<int>();
    c.encoder.residual = e.at("residual").get<bool>();
    c.encoder.normalize_adjacency = e.at("normalize_adjacency").get<bool>();
    c.encoder.bn_momentum = e.at("bn_momentum").get<double>();
    c.encoder.bn_eps = e.at("bn_eps").get<double>();
    const auto& d = j.at("decoder");
    c.decoder.hidden = d.at("hidden").get<int>();
    c.decoder.mixtures = d.at("M").get<int>();
    c.decoder.n_max = d.at("n_max").get<int>();
    c.decoder.temperature = d.at("temperature").get<double>();
    c.decoder.offset_scale = d.at("offset_scale").get<double>();
    const auto& t = j.at("train");
    c.train.lr = t.at("lr").get<double>();
    c.train.decay = t.at("decay").get<double>();
    c.train.beta1 = t.at("beta1").get<double>();
    c.train.beta2 = t.at("beta2").get<double>();
    c.train.eps = t.at("eps").get<double>();
    c.train.clip = t.at("clip").get<double>();
    c.train.clip_mode = detail::parse_clip_mode(t.at("clip_mode").get<std::string>());
    c.train.batch_size = t.at("batch_size").get<int>();
    c.train.iterations = t.at("iterations").get<int>();
    c.train.p_mask_train = t.at("p_mask_train").get<double>();
    c.train.seed = t.at("seed").get<std::uint64_t>();
    c.train.checkpoint_every = t.at("checkpoint_every").get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CheckpointFormat, std::string("bad configuration JSON: ") + e.what());
  }
  return c;
}

/// Sets one key.  Unknown keys are rejected.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  auto as_int = [&] { return static_cast<int>(parse_int(key, value)); };
  auto as_double = [&] { return parse_double(key, value); };
  if (key == "n") c.lattice.n = as_int();
  else if (key == "side") c.lattice.side = c.encoder.side = as_int();
  else if (key == "proximity") c.graph.proximity = parse_proximity(value);
  else if (key == "d_T") c.graph.distance_threshold = as_double();
  else if (key == "self_loops") c.graph.self_loops = parse_bool(value);
  else if (key == "embed_mode") c.graph.embed_mode = c.encoder.embed_mode = parse_embed_mode(value);
  else if (key == "d") c.encoder.dim = as_int();
  else if (key == "K") c.encoder.layers = as_int();
  else if (key == "dropout") c.encoder.dropout = as_double();
  else if (key == "pooling") c.encoder.pooling = parse_pooling(value);
  else if (key == "residual") c.encoder.residual = parse_bool(value);
  else if (key == "normalize_adjacency") c.encoder.normalize_adjacency = parse_bool(value);
  else if (key == "bn_momentum") c.encoder.bn_momentum = as_double();
  else if (key == "hidden") c.decoder.hidden = as_int();
  else if (key == "M") c.decoder.mixtures = as_int();
  else if (key == "n_max") c.decoder.n_max = as_int();
  else if (key == "temperature") c.decoder.temperature = as_double();
  else if (key == "lr") c.train.lr = as_double();
  else if (key == "decay") c.train.decay = as_double();
  else if (key == "beta1") c.train.beta1 = as_double();
  else if (key == "beta2") c.train.beta2 = as_double();
  else if (key == "eps") c.train.eps = as_double();
  else if (key == "clip") c.train.clip = as_double();
  else if (key == "clip_mode") c.train.clip_mode = parse_clip_mode(value);
  else if (key == "batch_size") c.train.batch_size = as_int();
  else if (key == "iterations") c.train.iterations = as_int();
  else if (key == "p_mask_train") c.train.p_mask_train = as_double();
  else if (key == "seed") c.train.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "checkpoint_every") c.train.checkpoint_every = as_int();
  else fail(ErrorCode::InvalidConfig, "unknown config key: " + key);
}

/// Parses `key = value` lines; '#' starts a comment.
inline void apply_config_text(RunConfig& c, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::InvalidConfig, "line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

inline void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Usage, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(c, ss.str());
}

}  // namespace sketchlattice
