#pragma once

// Command-line front end.  `run_cli` parses argv, dispatches a subcommand,
// writes a manifest.json into the output directory and maps errors to exit
// codes (2 usage, 3 data, 4 numeric/model).
//
// Settings precedence: command-line flags > --config file > built-in defaults.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/sha.h>

#include "sketchlattice/config.hpp"
#include "sketchlattice/eval.hpp"
#include "sketchlattice/model.hpp"
#include "sketchlattice/sketch.hpp"
#include "sketchlattice/toy_data.hpp"
#include "sketchlattice/trainer.hpp"

namespace sketchlattice {

/// SHA-1 of "blob <size>\0<content>", as printed by `git hash-object`.
inline std::string git_blob_sha1(const std::string& content) {
  std::string data = "blob " + std::to_string(content.size());
  data.push_back('\0');
  data += content;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  std::string hex;
  char buf[3];
  for (unsigned char b : digest) {
    std::snprintf(buf, sizeof buf, "%02x", b);
    hex += buf;
  }
  return hex;
}

namespace cli {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> n;
  std::optional<double> pmask;
  std::string checkpoint;
  std::string out = "sketchlattice_out";
  std::vector<std::string> sets;    // key=value overrides
  std::vector<std::string> inputs;  // positional files
  std::string resume;
  std::vector<double> levels{0.0, 0.1, 0.3, 0.5};
  std::string levels_text;  // comma-separated, overrides `levels`
  int count = 1;
  int toy_count = 300;
  int test_count = 50;
  std::string format = "svg";
};

struct Context {
  Options opt;
  std::string command;
  RunConfig config;
  nlohmann::json paths = nlohmann::json::object();
  std::string hashed_checkpoint;  // checkpoint file recorded in the manifest
  std::ostream* out = &std::cout;
};

inline std::filesystem::path out_path(const Context& ctx, const std::string& name) {
  return std::filesystem::path(ctx.opt.out) / name;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << text;
  f.flush();
  if (!f) fail(ErrorCode::Io, "cannot write " + p.string());
}

/// Defaults, then the config file, then flags.
inline RunConfig resolve_config(const Options& o) {
  RunConfig c;
  if (!o.config_path.empty()) apply_config_file(c, o.config_path);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail(ErrorCode::Usage, "--set expects KEY=VALUE, got " + kv);
    set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) c.train.seed = *o.seed;
  if (o.n) c.lattice.n = *o.n;
  if (o.pmask) c.train.p_mask_train = *o.pmask;
  validate(c);
  return c;
}

inline std::uint64_t seed_of(const Context& ctx) { return ctx.config.train.seed; }
inline int n_of(const Context& ctx) { return ctx.config.lattice.n; }
inline double pmask_of(const Context& ctx) { return ctx.opt.pmask.value_or(0.0); }

inline Model<float> load_model(Context& ctx) {
  if (ctx.opt.checkpoint.empty()) fail(ErrorCode::Usage, "--checkpoint is required");
  ctx.hashed_checkpoint = ctx.opt.checkpoint;
  ctx.paths["checkpoint"] = ctx.opt.checkpoint;
  return load_checkpoint<float>(ctx.opt.checkpoint).model;
}

/// A raster from a PGM file, or the rasterization of the first sketch in a
/// JSON-lines / JSON file.
inline RasterSketch load_raster(const std::string& path, int side) {
  const std::string ext = std::filesystem::path(path).extension().string();
  if (ext == ".pgm") return read_pgm(path);
  const auto records = read_quickdraw_file(path);
  if (records.empty()) fail(ErrorCode::DatasetEmpty, path + " holds no sketch");
  return rasterize(records.front().sketch, side);
}

inline nlohmann::json sketch_json(const VectorSketch& s) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& st : s.steps)
    steps.push_back({st.dx, st.dy, st.pen == Pen::down ? 0 : (st.pen == Pen::lift ? 1 : 2)});
  return steps;
}

// ---------------------------------------------------------------------------
// Subcommands

inline void cmd_ingest(Context& ctx) {
  if (ctx.opt.inputs.empty()) fail(ErrorCode::Usage, "ingest needs at least one input file");
  const Dataset data = load_dataset(ctx.opt.inputs, ctx.config.decoder.n_max);
  std::filesystem::create_directories(out_path(ctx, "rasters"));
  std::string lines;
  for (std::size_t i = 0; i < data.sketches.size(); ++i) {
    lines += to_quickdraw_line(data.sketches[i], data.labels[i]) + "\n";
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.pgm", i);
    write_pgm(out_path(ctx, "rasters/" + std::string(name)).string(),
              rasterize(data.sketches[i], ctx.config.lattice.side));
  }
  write_text(out_path(ctx, "dataset.ndjson"), lines);
  ctx.paths["inputs"] = ctx.opt.inputs;
  ctx.paths["dataset"] = out_path(ctx, "dataset.ndjson").string();
  *ctx.out << "ingested " << data.sketches.size() << " sketches, dropped " << data.dropped << "\n";
}

inline void cmd_toy_data(Context& ctx) {
  Rng rng = stream_rng(seed_of(ctx), kSampleStream);
  for (const char* split : {"train", "test"}) {
    std::filesystem::create_directories(out_path(ctx, split));
    const int count = std::string(split) == "train" ? ctx.opt.toy_count : ctx.opt.test_count;
    for (const auto& cat : toy_categories()) {
      std::string text;
      for (const auto& line : toy_records(cat, static_cast<std::size_t>(count), rng)) text += line + "\n";
      write_text(out_path(ctx, std::string(split) + "/" + cat + ".ndjson"), text);
    }
  }
  ctx.paths["train"] = out_path(ctx, "train").string();
  ctx.paths["test"] = out_path(ctx, "test").string();
  *ctx.out << "wrote " << ctx.opt.toy_count << " train and " << ctx.opt.test_count
           << " test sketches per category\n";
}

inline void cmd_train(Context& ctx) {
  if (ctx.opt.inputs.empty()) fail(ErrorCode::Usage, "train needs at least one dataset file");
  const Dataset data = load_dataset(ctx.opt.inputs, ctx.config.decoder.n_max);
  std::optional<std::string> resume;
  if (!ctx.opt.resume.empty()) resume = ctx.opt.resume;
  const FitResult r = fit(data, ctx.config, ctx.opt.out, resume, ctx.out);
  ctx.hashed_checkpoint = r.final_checkpoint;
  ctx.paths["inputs"] = ctx.opt.inputs;
  ctx.paths["loss_csv"] = out_path(ctx, "loss.csv").string();
  ctx.paths["checkpoint"] = r.final_checkpoint;
  if (resume) ctx.paths["resume"] = *resume;
  *ctx.out << "trained to iteration " << r.iteration << " on " << data.sketches.size() << " sketches ("
           << r.skipped_items << " empty-lattice items skipped)\n";
}

inline void cmd_heal(Context& ctx) {
  if (ctx.opt.inputs.empty()) fail(ErrorCode::Usage, "heal needs an input raster or sketch");
  const Model<float> model = load_model(ctx);
  nlohmann::json outputs = nlohmann::json::array();
  for (std::size_t i = 0; i < ctx.opt.inputs.size(); ++i) {
    const RasterSketch raster = load_raster(ctx.opt.inputs[i], model.config.lattice.side);
    const HealResult h = heal(HealRequest{raster, pmask_of(ctx), n_of(ctx), seed_of(ctx) + i}, model);
    const std::string stem = ctx.opt.inputs.size() == 1 ? "healed" : "healed_" + std::to_string(i);
    write_text(out_path(ctx, stem + ".svg"), render_svg(h.sketch));
    const nlohmann::json j{{"input", ctx.opt.inputs[i]},
                           {"p_mask", pmask_of(ctx)},
                           {"steps", sketch_json(h.sketch)},
                           {"lattice", to_json(h.lattice)}};
    write_text(out_path(ctx, stem + ".json"), j.dump(2) + "\n");
    outputs.push_back(out_path(ctx, stem + ".svg").string());
    *ctx.out << ctx.opt.inputs[i] << ": " << h.lattice.points.size() << " lattice points, "
             << h.sketch.steps.size() << " steps\n";
  }
  ctx.paths["inputs"] = ctx.opt.inputs;
  ctx.paths["outputs"] = outputs;
}

inline void cmd_generate(Context& ctx) {
  const Model<float> model = load_model(ctx);
  nlohmann::json outputs = nlohmann::json::array();
  for (int k = 0; k < ctx.opt.count; ++k) {
    const std::uint64_t seed = seed_of(ctx) + static_cast<std::uint64_t>(k);
    VectorSketch s;
    if (ctx.opt.inputs.empty()) {
      Rng rng = stream_rng(seed, kSampleStream);
      const Mat<float> z = standard_normal<float>(model.config.encoder.dim, 1, rng);
      s = generate<float>(z.col(0), model.decoder, model.config.decoder, rng);
    } else {
      const RasterSketch raster = load_raster(ctx.opt.inputs.front(), model.config.lattice.side);
      s = heal(HealRequest{raster, 0.0, n_of(ctx), seed}, model).sketch;
    }
    const std::string stem = "generated_" + std::to_string(k);
    write_text(out_path(ctx, stem + ".svg"), render_svg(s));
    write_text(out_path(ctx, stem + ".ndjson"), to_quickdraw_line(s) + "\n");
    outputs.push_back(out_path(ctx, stem + ".svg").string());
  }
  if (!ctx.opt.inputs.empty()) ctx.paths["inputs"] = ctx.opt.inputs;
  ctx.paths["outputs"] = outputs;
  *ctx.out << "generated " << ctx.opt.count << " sketches\n";
}

inline void cmd_img2sketch(Context& ctx) {
  if (ctx.opt.inputs.size() != 1) fail(ErrorCode::Usage, "img2sketch needs exactly one edge map");
  const Model<float> model = load_model(ctx);
  const VectorSketch s = edge_to_sketch(read_pgm(ctx.opt.inputs.front()), model, n_of(ctx), seed_of(ctx));
  write_text(out_path(ctx, "sketch.svg"), render_svg(s));
  write_text(out_path(ctx, "sketch.ndjson"), to_quickdraw_line(s) + "\n");
  ctx.paths["inputs"] = ctx.opt.inputs;
  ctx.paths["outputs"] = {out_path(ctx, "sketch.svg").string()};
  *ctx.out << "sketch with " << s.steps.size() << " steps\n";
}

inline void cmd_eval(Context& ctx) {
  if (ctx.opt.inputs.empty()) fail(ErrorCode::Usage, "eval needs test dataset files");
  const Model<float> model = load_model(ctx);
  const Dataset test = load_dataset(ctx.opt.inputs, std::numeric_limits<int>::max());
  const SweepReport r = healing_sweep(test.sketches, test.labels, model, ctx.opt.levels, n_of(ctx), seed_of(ctx));
  write_text(out_path(ctx, "sweep.csv"), sweep_csv(r));
  ctx.paths["inputs"] = ctx.opt.inputs;
  ctx.paths["outputs"] = {out_path(ctx, "sweep.csv").string()};
  *ctx.out << sweep_table(r);
}

/// Exhaustive gradient check on a small double-precision model.  Exits with
/// the numeric code when any array exceeds the tolerance.
inline constexpr double kAuditTolerance = 1e-3;

inline void cmd_audit_grad(Context& ctx) {
  const RunConfig c = audit_config();
  Rng init = stream_rng(seed_of(ctx), kInitStream);
  const Model<double> model = Model<double>::init(c, init);
  const AuditProbe probe = make_audit_probe(c, seed_of(ctx));
  const AuditReport r = finite_diff_audit(model, probe.graphs, probe.targets, seed_of(ctx));
  std::string csv = "array,checked,max_rel_error,max_abs_grad\n";
  char buf[200];
  for (const auto& e : r.arrays) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.3e,%.3e\n", e.name.c_str(), e.checked, e.max_rel_error,
                  e.max_abs_grad);
    csv += buf;
    std::snprintf(buf, sizeof buf, "%-28s %6zu  %.3e\n", e.name.c_str(), e.checked, e.max_rel_error);
    *ctx.out << buf;
  }
  write_text(out_path(ctx, "audit.csv"), csv);
  ctx.paths["outputs"] = {out_path(ctx, "audit.csv").string()};
  *ctx.out << "worst relative error " << r.worst << "\n";
  if (!(r.worst < kAuditTolerance))
    fail(ErrorCode::NumericalUnderflow, "gradient audit exceeds tolerance");
}

/// Vector sketch (QuickDraw JSON line, or the JSON written by heal) to SVG
/// or PGM.
inline void cmd_render(Context& ctx) {
  if (ctx.opt.inputs.size() != 1) fail(ErrorCode::Usage, "render needs exactly one input");
  const std::string text = read_file_or_fail(ctx.opt.inputs.front());
  VectorSketch s;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    // Several JSON lines: take the first.
    s = parse_quickdraw_line(text.substr(0, text.find('\n')));
  }
  if (j.is_object() && j.contains("steps")) {
    for (const auto& st : j.at("steps")) {
      const int pen = st.at(2).get<int>();
      if (pen < 0 || pen > 2) fail(ErrorCode::MalformedRecord, "pen state must be 0, 1 or 2");
      s.steps.push_back({st.at(0).get<double>(), st.at(1).get<double>(), static_cast<Pen>(pen)});
    }
    if (!s.steps.empty() && !is_valid(s)) fail(ErrorCode::MalformedRecord, "invalid step sequence");
  } else if (j.is_object()) {
    s = parse_quickdraw_record(j.dump()).sketch;
  }
  std::string written;
  if (ctx.opt.format == "svg") {
    written = out_path(ctx, "render.svg").string();
    write_text(written, render_svg(s));
  } else if (ctx.opt.format == "pgm") {
    written = out_path(ctx, "render.pgm").string();
    write_pgm(written, rasterize(s, ctx.config.lattice.side));
  } else {
    fail(ErrorCode::Usage, "--format must be svg or pgm");
  }
  ctx.paths["inputs"] = ctx.opt.inputs;
  ctx.paths["outputs"] = {written};
  *ctx.out << written << "\n";
}

inline void cmd_params(Context& ctx) {
  Model<float> model = Model<float>::zeros(ctx.config);
  const ParameterCount enc = count_parameters<float>(model.encoder);
  const ParameterCount dec = count_parameters<float>(model.decoder);
  for (const auto& [name, n] : enc.arrays) *ctx.out << name << " " << n << "\n";
  for (const auto& [name, n] : dec.arrays) *ctx.out << name << " " << n << "\n";
  *ctx.out << "encoder_total " << enc.total << "\n";
  *ctx.out << "decoder_total " << dec.total << "\n";
  *ctx.out << "total " << enc.total + dec.total << "\n";
}

// ---------------------------------------------------------------------------

inline void write_manifest(const Context& ctx) {
  nlohmann::json m;
  m["command"] = ctx.command;
  m["config"] = to_json(ctx.config);
  m["seed"] = ctx.config.train.seed;
  m["paths"] = ctx.paths;
  m["out"] = ctx.opt.out;
  if (!ctx.hashed_checkpoint.empty())
    m["checkpoint_sha1"] = git_blob_sha1(read_file_or_fail(ctx.hashed_checkpoint));
  write_text(out_path(ctx, "manifest.json"), m.dump(2) + "\n");
}

}  // namespace cli

/// Entry point shared by the executable and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  cli::Context ctx;
  ctx.out = &out;
  auto& o = ctx.opt;

  CLI::App app{"Lattice-based sketch encoder / decoder"};
  app.name("sketchlattice");
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", o.config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "random seed");
  app.add_option("--n", o.n, "lattice grid size (default 32)");
  app.add_option("--pmask", o.pmask, "lattice corruption probability (train: p_mask_train)");
  app.add_option("--checkpoint", o.checkpoint, "model checkpoint");
  app.add_option("--out", o.out, "output directory")->capture_default_str();
  app.add_option("--set", o.sets, "config override KEY=VALUE (repeatable)");

  struct Sub {
    const char* name;
    const char* help;
    void (*run)(cli::Context&);
  };
  const Sub subs[] = {
      {"ingest", "JSON-lines files to a canonical dataset plus rasters", cli::cmd_ingest},
      {"toy-data", "write the synthetic circle / house corpus", cli::cmd_toy_data},
      {"train", "fit a model on JSON-lines files", cli::cmd_train},
      {"heal", "heal rasters (PGM) or sketches (JSON lines)", cli::cmd_heal},
      {"generate", "sample z ~ N(0, I), or encode an input, and decode", cli::cmd_generate},
      {"img2sketch", "edge map (PGM) to sketch", cli::cmd_img2sketch},
      {"eval", "healing sweep and retrieval on a test split", cli::cmd_eval},
      {"audit-grad", "finite-difference gradient audit", cli::cmd_audit_grad},
      {"render", "vector sketch JSON to SVG or PGM", cli::cmd_render},
      {"params", "parameter counts for the configured model", cli::cmd_params},
  };
  std::vector<std::pair<CLI::App*, const Sub*>> registered;
  for (const Sub& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    const std::string name = s.name;
    if (name == "ingest" || name == "train" || name == "heal" || name == "generate" ||
        name == "img2sketch" || name == "eval" || name == "render")
      sub->add_option("inputs", o.inputs, "input files")->check(CLI::ExistingFile);
    if (name == "train") sub->add_option("--resume", o.resume, "checkpoint to resume from")->check(CLI::ExistingFile);
    if (name == "eval") sub->add_option("--levels", o.levels_text, "comma-separated p_mask levels (default 0,0.1,0.3,0.5)");
    if (name == "generate") sub->add_option("--count", o.count, "number of sketches")->check(CLI::PositiveNumber);
    if (name == "toy-data") {
      sub->add_option("--count", o.toy_count, "train sketches per category")->check(CLI::PositiveNumber);
      sub->add_option("--test-count", o.test_count, "test sketches per category")->check(CLI::PositiveNumber);
    }
    if (name == "render") sub->add_option("--format", o.format, "svg or pgm");
    registered.emplace_back(sub, &s);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << to_string(ErrorCode::Usage) << ": " << e.what() << "\n";
    return exit_code(ErrorCode::Usage);
  }

  try {
    if (!o.levels_text.empty()) {
      o.levels.clear();
      std::istringstream in(o.levels_text);
      for (std::string item; std::getline(in, item, ',');) {
        const double p = detail::parse_double("--levels", item);
        if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCode::OutOfRange, "--levels entries must be in [0, 1]");
        o.levels.push_back(p);
      }
    }
    for (const auto& [sub, s] : registered) {
      if (!sub->parsed()) continue;
      ctx.command = s->name;
      ctx.config = cli::resolve_config(o);
      std::filesystem::create_directories(o.out);
      s->run(ctx);
      cli::write_manifest(ctx);
    }
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << to_string(ErrorCode::Io) << ": " << e.what() << "\n";
    return exit_code(ErrorCode::Io);
  }
  return 0;
}

}  // namespace sketchlattice
