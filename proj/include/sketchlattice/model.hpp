#pragma once

// The full model (encoder + latent bridge + decoder) with its configuration,
// and checkpoint save / load including optimizer state.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sketchlattice/checkpoint.hpp"
#include "sketchlattice/config.hpp"
#include "sketchlattice/decoder.hpp"
#include "sketchlattice/encoder.hpp"
#include "sketchlattice/optim.hpp"

namespace sketchlattice {

template <typename S>
struct Model {
  RunConfig config;
  EncoderParams<S> encoder;
  DecoderParams<S> decoder;

  template <typename F>
  void visit(F&& f) {
    encoder.visit(f);
    decoder.visit(f);
  }

  static Model zeros(const RunConfig& c) {
    validate(c);
    return {c, EncoderParams<S>::zeros(c.encoder), DecoderParams<S>::zeros(c.decoder, c.encoder.dim)};
  }

  static Model init(const RunConfig& c, Rng& rng) {
    validate(c);
    Model m{c, EncoderParams<S>::init(c.encoder, rng), {}};
    m.decoder = DecoderParams<S>::init(c.decoder, c.encoder.dim, rng);
    return m;
  }

  /// Same shapes, every array zero: the gradient accumulator.
  Model zeros_like() const { return zeros(config); }

  template <typename T>
  Model<T> cast() const {
    Model<T> out = Model<T>::zeros(config);
    auto src = collect_arrays<S>(const_cast<Model&>(*this));
    auto dst = collect_arrays<T>(out);
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].value = src[i].value->template cast<T>();
    return out;
  }
};

inline constexpr const char* kAdamMomentPrefix = "adam.m/";
inline constexpr const char* kAdamVariancePrefix = "adam.v/";

template <typename S>
std::string encode_model(Model<S>& model, const AdamState<S>* adam) {
  nlohmann::json header;
  header["format"] = "sketchlattice-checkpoint";
  header["version"] = 1;
  header["config"] = to_json(model.config);
  header["iteration"] = adam ? adam->iteration : 0;
  header["has_optimizer"] = adam != nullptr;
  std::vector<std::pair<std::string, const Mat<S>*>> arrays;
  for (const auto& ref : collect_arrays<S>(model)) arrays.emplace_back(ref.name, ref.value);
  if (adam) {
    for (std::size_t i = 0; i < adam->names.size(); ++i)
      arrays.emplace_back(kAdamMomentPrefix + adam->names[i], &adam->m[i]);
    for (std::size_t i = 0; i < adam->names.size(); ++i)
      arrays.emplace_back(kAdamVariancePrefix + adam->names[i], &adam->v[i]);
  }
  return encode_checkpoint<S>(std::move(header), arrays);
}

template <typename S>
void save_checkpoint(const std::string& path, Model<S>& model, const AdamState<S>* adam = nullptr) {
  write_file_or_fail(path, encode_model(model, adam));
}

template <typename S>
struct LoadedCheckpoint {
  Model<S> model;
  std::optional<AdamState<S>> adam;
  long iteration = 0;
};

template <typename S>
LoadedCheckpoint<S> decode_model(const std::string& bytes) {
  const CheckpointData ckpt = decode_checkpoint(bytes);
  if (ckpt.header.value("format", "") != "sketchlattice-checkpoint")
    fail(ErrorCode::CheckpointFormat, "unknown checkpoint format");
  if (!ckpt.header.contains("config")) fail(ErrorCode::CheckpointFormat, "checkpoint lacks config");
  const RunConfig cfg = run_config_from_json(ckpt.header.at("config"));
  LoadedCheckpoint<S> out{Model<S>::zeros(cfg), std::nullopt, ckpt.header.value("iteration", 0L)};
  load_arrays<S>(out.model, ckpt);
  if (ckpt.header.value("has_optimizer", false)) {
    AdamState<S> st = AdamState<S>::for_params(out.model);
    for (std::size_t i = 0; i < st.names.size(); ++i) {
      const auto m = ckpt.arrays.find(kAdamMomentPrefix + st.names[i]);
      const auto v = ckpt.arrays.find(kAdamVariancePrefix + st.names[i]);
      if (m == ckpt.arrays.end() || v == ckpt.arrays.end())
        fail(ErrorCode::CheckpointFormat, "checkpoint lacks optimizer state for " + st.names[i]);
      if (m->second.rows() != st.m[i].rows() || m->second.cols() != st.m[i].cols() ||
          v->second.rows() != st.v[i].rows() || v->second.cols() != st.v[i].cols())
        fail(ErrorCode::CheckpointFormat, "optimizer state shape mismatch for " + st.names[i]);
      st.m[i] = m->second.template cast<S>();
      st.v[i] = v->second.template cast<S>();
    }
    st.iteration = out.iteration;
    out.adam = std::move(st);
  }
  return out;
}

template <typename S>
LoadedCheckpoint<S> load_checkpoint(const std::string& path) {
  return decode_model<S>(read_file_or_fail(path));
}

}  // namespace sketchlattice
