// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "televit/attention.hpp"
#include "televit/checkpoint.hpp"
#include "televit/errors.hpp"
#include "televit/experiment.hpp"
#include "televit/metrics.hpp"
#include "televit/parallel.hpp"
#include "televit/prediction.hpp"

#ifndef TELEVIT_VERSION
#define TELEVIT_VERSION "0.0.0"
#endif

namespace televit::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string abs_path(const fs::path& p) { return fs::absolute(p).lexically_normal().string(); }

// The manifest of one command. Written last, so its presence marks a finished run.
struct Manifest {
  std::string command;
  std::vector<std::string> args;
  json config = json::object();
  json seed = nullptr;
  json inputs = json::object();
  json outputs = json::object();
  Clock::time_point start = Clock::now();

  void write(const fs::path& path) const {
    const double wall = std::chrono::duration<double>(Clock::now() - start).count();
    write_json_file(path, {{"command", command},
                           {"args", args},
                           {"config", config},
                           {"seed", seed},
                           {"tool_version", TELEVIT_VERSION},
                           {"threads", worker_threads()},
                           {"inputs", inputs},
                           {"outputs", outputs},
                           {"wall_time_s", wall}});
  }
};

// Everything a checkpoint needs to rebuild its data pipeline.
json checkpoint_extra(const ExperimentConfig& exp, const fs::path& cube) {
  return {{"experiment", exp}, {"cube", abs_path(cube)}};
}

ExperimentConfig experiment_of(const json& header) {
  if (!header.contains("experiment"))
    throw DataError("checkpoint carries no experiment record; it was not written by this tool");
  return header.at("experiment").get<ExperimentConfig>();
}

ExperimentConfig load_experiment(const std::string& path, const std::string& variant, std::size_t horizon) {
  ExperimentConfig exp;
  if (!path.empty()) exp = read_json_file(path).get<ExperimentConfig>();
  if (!variant.empty()) exp.train.variant = parse_variant(variant);
  if (horizon) exp.train.horizon = horizon;
  exp.validate();
  return exp;
}

const std::vector<Sample>& split_samples(const PreparedData& data, const std::string& split) {
  return data.sets.of(parse_split(split));
}

struct TrainOutcome {
  TrainResult result;
  ModelConfig model;
};

TrainOutcome run_training(const ExperimentConfig& exp, const PreparedData& data, const fs::path& cube,
                          const fs::path& out, std::ostream& err) {
  const ModelConfig mc = resolve_model_config(exp, data);
  if (data.sets.train.empty()) throw DataError("no training samples for this split and horizon");
  err << "train " << to_string(exp.train.variant) << " h=" << exp.train.horizon << ": " << data.sets.train.size()
      << " train / " << data.sets.val.size() << " val samples, L=" << mc.sequence_length() << '\n';
  TrainOptions opts;
  opts.run_dir = out;
  opts.checkpoint_extra = checkpoint_extra(exp, cube);
  opts.on_epoch = [&err](const EpochRecord& e) {
    err << "  epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss;
    if (e.val_auprc) err << " auprc " << *e.val_auprc;
    err << " lr " << e.lr << '\n';
  };
  return {train(TeleViTModel(mc, exp.model_seed), data.sets.train, data.sets.val, exp.train, opts), mc};
}

// --- subcommands ------------------------------------------------------------

struct CubegenArgs {
  std::string config, out;
  std::uint64_t seed = 0;
};

int cmd_cubegen(const CubegenArgs& a, Manifest& m, std::ostream& err) {
  GeneratorConfig g;
  if (!a.config.empty()) {
    try {
      g = read_json_file(a.config).get<GeneratorConfig>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("generator config: ") + e.what());
    }
  }
  const DataCube cube = generate_synthetic_cube(g, a.seed);
  save_cube(a.out, cube);
  err << "wrote " << cube.n_steps() << " steps of " << g.n_lat << "x" << g.n_lon << " to " << a.out << '\n';
  m.config = g;
  m.seed = a.seed;
  m.outputs = {{"cube", abs_path(a.out)}};
  m.write(fs::path(a.out) / "run.json");
  return kExitOk;
}

struct CoarsenArgs {
  std::string cube, out;
  std::size_t factor = 4;
};

int cmd_coarsen(const CoarsenArgs& a, Manifest& m, std::ostream& err) {
  const DataCube coarse = coarsen(load_cube(a.cube), a.factor);
  save_cube(a.out, coarse);
  err << "wrote " << coarse.grid.n_lat << "x" << coarse.grid.n_lon << " to " << a.out << '\n';
  m.config = {{"factor", a.factor}};
  m.inputs = {{"cube", abs_path(a.cube)}};
  m.outputs = {{"cube", abs_path(a.out)}};
  m.write(fs::path(a.out) / "run.json");
  return kExitOk;
}

struct ExperimentArgs {
  std::string cube, variant, config, out;
  std::size_t horizon = 0;
};

int cmd_train(const ExperimentArgs& a, Manifest& m, std::ostream& err) {
  const ExperimentConfig exp = load_experiment(a.config, a.variant, a.horizon);
  const PreparedData data = prepare_data(load_cube(a.cube), exp);
  const TrainOutcome t = run_training(exp, data, a.cube, a.out, err);
  err << "best epoch " << t.result.history.best_epoch << '\n';
  m.config = exp;
  m.seed = {{"model", exp.model_seed}, {"train", exp.train.seed}};
  m.inputs = {{"cube", abs_path(a.cube)}};
  m.outputs = {{"dir", abs_path(a.out)}, {"best", "best.ckpt"}, {"last", "last.ckpt"}, {"history", "history.json"}};
  m.write(fs::path(a.out) / "run.json");
  return kExitOk;
}

int cmd_init(const ExperimentArgs& a, Manifest& m, std::ostream& err) {
  const ExperimentConfig exp = load_experiment(a.config, a.variant, a.horizon);
  const PreparedData data = prepare_data(load_cube(a.cube), exp);
  const ModelConfig mc = resolve_model_config(exp, data);
  const TeleViTModel model(mc, exp.model_seed);
  save_checkpoint(a.out, model, {0, json::object(), checkpoint_extra(exp, a.cube)});
  err << "wrote untrained " << to_string(mc.variant) << " (" << model.parameter_count() << " parameters) to "
      << a.out << '\n';
  m.config = exp;
  m.seed = {{"model", exp.model_seed}};
  m.inputs = {{"cube", abs_path(a.cube)}};
  m.outputs = {{"checkpoint", abs_path(a.out)}};
  m.write(a.out + ".run.json");
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt, cube, split = "test", out, baseline = "model";
};

EvalReport evaluate_checkpoint(const LoadedCheckpoint& ck, const ExperimentConfig& exp, const PreparedData& data,
                               const std::string& split, const std::string& baseline) {
  const auto& samples = split_samples(data, split);
  if (samples.empty()) throw DataError("split '" + split + "' has no samples at h=" + std::to_string(exp.train.horizon));
  if (baseline == "climatology") {
    const Climatology clim = seasonal_cycle_baseline(data.fine, exp.split);
    return evaluate(climatology_scores(clim, data.fine.calendar), samples, "climatology");
  }
  return evaluate(model_scores(ck.model), samples, to_string(ck.model.config().variant));
}

int cmd_eval(const EvalArgs& a, Manifest& m, std::ostream& err) {
  const LoadedCheckpoint ck = load_checkpoint(a.ckpt);
  const ExperimentConfig exp = experiment_of(ck.header);
  const PreparedData data = prepare_data(load_cube(a.cube), exp);
  const EvalReport report = evaluate_checkpoint(ck, exp, data, a.split, a.baseline);
  json j = report_json(report);
  j["split"] = a.split;
  write_json_file(a.out, j);
  err << report.variant << " h=" << report.h << " " << a.split << " AUPRC " << report.auprc << " over "
      << report.n_pixels << " pixels (" << report.n_pos << " burned)\n";
  m.config = {{"split", a.split}, {"baseline", a.baseline}, {"experiment", exp}};
  m.inputs = {{"checkpoint", abs_path(a.ckpt)}, {"cube", abs_path(a.cube)}};
  m.outputs = {{"report", abs_path(a.out)}};
  m.write(a.out + ".run.json");
  return kExitOk;
}

struct PredictArgs {
  std::string ckpt, cube, out;
  std::size_t time = 0;
  double mask_below = 0.05;
};

int cmd_predict(const PredictArgs& a, Manifest& m, std::ostream& err) {
  const LoadedCheckpoint ck = load_checkpoint(a.ckpt);
  const ExperimentConfig exp = experiment_of(ck.header);
  const DataCube raw = load_cube(a.cube);
  const DataCube fine = preprocess(raw, compute_split_stats(raw, exp.split));
  const DataCube rc = coarsen(raw, exp.coarsen_factor);
  const DataCube coarse = preprocess(rc, compute_split_stats(rc, exp.split));
  const PredictionMap map = predict_map(ck.model, fine, coarse, a.time, exp.train.horizon, exp.patch, a.mask_below);
  export_prediction_map(map, a.out);
  const json header = prediction_header(map);
  err << "t=" << a.time << " h=" << map.h << ": " << header["cells_valid"] << " cells above " << a.mask_below
      << ", written to " << a.out << '\n';
  m.config = {{"time", a.time}, {"mask_below", a.mask_below}, {"experiment", exp}};
  m.inputs = {{"checkpoint", abs_path(a.ckpt)}, {"cube", abs_path(a.cube)}};
  m.outputs = {{"dir", abs_path(a.out)}, {"files", {"proba.f32", "proba.json", "proba.ppm", "target.f32", "target.ppm"}}};
  m.write(fs::path(a.out) / "run.json");
  return kExitOk;
}

struct AttnArgs {
  std::string ckpt, cube, split = "test", out;
  std::size_t sample_id = 0, layer = 0, head = 0;
};

int cmd_attn(const AttnArgs& a, Manifest& m, std::ostream& err) {
  const LoadedCheckpoint ck = load_checkpoint(a.ckpt);
  const ExperimentConfig exp = experiment_of(ck.header);
  const std::string cube = a.cube.empty() ? ck.header.at("cube").get<std::string>() : a.cube;
  const PreparedData data = prepare_data(load_cube(cube), exp);
  const auto& samples = split_samples(data, a.split);
  if (a.sample_id >= samples.size())
    throw DataError("sample id " + std::to_string(a.sample_id) + " out of range: split '" + a.split + "' has " +
                    std::to_string(samples.size()) + " samples");
  const AttentionReport report = extract_attention(ck.model, samples[a.sample_id]);
  if (a.layer >= report.layers || a.head >= report.heads)
    throw ConfigError("layer/head " + std::to_string(a.layer) + "/" + std::to_string(a.head) + " out of range (" +
                      std::to_string(report.layers) + " layers, " + std::to_string(report.heads) + " heads)");
  const fs::path dir = a.out;
  fs::create_directories(dir);
  const std::string image = "attention_l" + std::to_string(a.layer) + "_h" + std::to_string(a.head) + ".ppm";
  export_attention_heatmap(report, a.layer, a.head, dir / image);
  json masses = block_mass_json(report);
  const Sample& s = samples[a.sample_id];
  masses["sample"] = {{"id", a.sample_id}, {"split", a.split}, {"t", s.t}, {"patch_index", s.patch_index}};
  write_json_file(dir / "block_mass.json", masses);
  err << "L=" << report.length << ", " << report.segments() << " segments, heatmap " << image << '\n';
  m.config = {{"sample_id", a.sample_id}, {"split", a.split}, {"layer", a.layer}, {"head", a.head}, {"experiment", exp}};
  m.inputs = {{"checkpoint", abs_path(a.ckpt)}, {"cube", abs_path(cube)}};
  m.outputs = {{"dir", abs_path(a.out)}, {"files", {image, "block_mass.json"}}};
  m.write(dir / "run.json");
  return kExitOk;
}

struct MatrixArgs {
  std::string cube, config, out;
};

// Matrix file: {"experiment": {...}, "variants": [...], "horizons": [...]}.
int cmd_matrix(const MatrixArgs& a, Manifest& m, std::ostream& err) {
  const json spec = read_json_file(a.config);
  static const char* const known[] = {"experiment", "variants", "horizons"};
  for (const auto& [key, value] : spec.items())
    if (std::none_of(std::begin(known), std::end(known), [&](const char* k) { return key == k; }))
      throw ConfigError("unknown matrix config key '" + key + "'");
  ExperimentConfig base;
  if (spec.contains("experiment")) base = spec.at("experiment").get<ExperimentConfig>();
  std::vector<std::string> variants{"local_only", "with_indices", "with_global", "with_indices_and_global"};
  std::vector<std::size_t> horizons{1, 2, 4, 8, 16};
  try {
    if (spec.contains("variants")) variants = spec.at("variants").get<std::vector<std::string>>();
    if (spec.contains("horizons")) horizons = spec.at("horizons").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("matrix config: ") + e.what());
  }
  if (variants.empty() || horizons.empty()) throw ConfigError("matrix needs at least one variant and one horizon");
  for (const auto& v : variants) parse_variant(v);

  const DataCube raw = load_cube(a.cube);
  json rows = json::array();
  for (const std::size_t h : horizons) {
    ExperimentConfig exp = base;
    exp.train.horizon = h;
    exp.validate();
    const PreparedData data = prepare_data(raw, exp);
    for (const auto& v : variants) {
      exp.train.variant = parse_variant(v);
      const fs::path dir = fs::path(a.out) / (v + "_h" + std::to_string(h));
      Manifest sub{"train", m.args};
      const TrainOutcome t = run_training(exp, data, a.cube, dir, err);
      sub.config = exp;
      sub.seed = {{"model", exp.model_seed}, {"train", exp.train.seed}};
      sub.inputs = {{"cube", abs_path(a.cube)}};
      json row = {{"variant", v}, {"h", h}, {"dir", dir.filename().string()},
                  {"best_epoch", t.result.history.best_epoch}};
      if (!data.sets.test.empty()) {
        const EvalReport r = evaluate(model_scores(t.result.best), data.sets.test, v);
        write_json_file(dir / "report.json", report_json(r));
        row["test_auprc"] = r.auprc;
        row["n_pos"] = r.n_pos;
        row["n_pixels"] = r.n_pixels;
      } else {
        row["test_auprc"] = nullptr;
      }
      sub.outputs = {{"dir", abs_path(dir)}, {"report", "report.json"}};
      sub.write(dir / "run.json");
      rows.push_back(row);
      err << v << " h=" << h << " test AUPRC " << row["test_auprc"] << '\n';
    }
  }
  write_json_file(fs::path(a.out) / "summary.json", {{"pooling", "all test pixels per (variant, horizon)"}, {"runs", rows}});
  m.config = spec;
  m.inputs = {{"cube", abs_path(a.cube)}};
  m.outputs = {{"dir", abs_path(a.out)}, {"summary", "summary.json"}};
  m.write(fs::path(a.out) / "run.json");
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"TeleViT desk-scale laboratory: synthetic cubes, training, evaluation, maps, attention", "televit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", TELEVIT_VERSION);

  CubegenArgs gen;
  auto* cubegen = app.add_subcommand("cubegen", "Generate a synthetic cube");
  cubegen->add_option("--config", gen.config, "Generator config JSON (partial keys allowed)")->check(CLI::ExistingFile);
  cubegen->add_option("--seed", gen.seed, "Generator seed")->required();
  cubegen->add_option("--out", gen.out, "Output cube directory")->required();

  CoarsenArgs co;
  auto* coarsen_cmd = app.add_subcommand("coarsen", "Block-mean a cube's drivers");
  coarsen_cmd->add_option("--cube", co.cube, "Input cube directory")->required();
  coarsen_cmd->add_option("--factor", co.factor, "Block size")->required();
  coarsen_cmd->add_option("--out", co.out, "Output cube directory")->required();

  ExperimentArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train one (variant, horizon) model");
  train_cmd->add_option("--cube", tr.cube, "Raw cube directory")->required();
  train_cmd->add_option("--variant", tr.variant, "local_only | with_indices | with_global | with_indices_and_global");
  train_cmd->add_option("--horizon", tr.horizon, "Lead time in 8-day steps");
  train_cmd->add_option("--config", tr.config, "Experiment config JSON")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr.out, "Run directory")->required();

  ExperimentArgs in;
  auto* init_cmd = app.add_subcommand("init", "Write an untrained checkpoint for an experiment");
  init_cmd->add_option("--cube", in.cube, "Raw cube directory")->required();
  init_cmd->add_option("--variant", in.variant, "Model variant");
  init_cmd->add_option("--horizon", in.horizon, "Lead time in 8-day steps");
  init_cmd->add_option("--config", in.config, "Experiment config JSON")->check(CLI::ExistingFile);
  init_cmd->add_option("--out", in.out, "Checkpoint file")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Pooled-pixel AUPRC of a checkpoint on one split");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--cube", ev.cube, "Raw cube directory")->required();
  eval_cmd->add_option("--split", ev.split, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--baseline", ev.baseline, "model | climatology")->check(CLI::IsMember({"model", "climatology"}));
  eval_cmd->add_option("--out", ev.out, "Report JSON file")->required();

  PredictArgs pr;
  auto* predict_cmd = app.add_subcommand("predict", "Export a full-grid probability map at one timestep");
  predict_cmd->add_option("--ckpt", pr.ckpt, "Checkpoint file")->required();
  predict_cmd->add_option("--cube", pr.cube, "Raw cube directory")->required();
  predict_cmd->add_option("--time", pr.time, "Input timestep index")->required();
  predict_cmd->add_option("--out", pr.out, "Output directory")->required();
  predict_cmd->add_option("--mask-below", pr.mask_below, "Scores below this are masked and zeroed")
      ->check(CLI::Range(0.0, 1.0));

  AttnArgs at;
  auto* attn_cmd = app.add_subcommand("attn", "Export one attention heatmap and block masses");
  attn_cmd->add_option("--ckpt", at.ckpt, "Checkpoint file")->required();
  attn_cmd->add_option("--sample-id", at.sample_id, "Index into the split's samples")->required();
  attn_cmd->add_option("--layer", at.layer, "Encoder layer")->required();
  attn_cmd->add_option("--head", at.head, "Attention head")->required();
  attn_cmd->add_option("--out", at.out, "Output directory")->required();
  attn_cmd->add_option("--cube", at.cube, "Raw cube directory (default: the one recorded in the checkpoint)");
  attn_cmd->add_option("--split", at.split, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));

  MatrixArgs mx;
  auto* matrix_cmd = app.add_subcommand("matrix", "Train and evaluate every (variant, horizon) pair");
  matrix_cmd->add_option("--cube", mx.cube, "Raw cube directory")->required();
  matrix_cmd->add_option("--config", mx.config, "Matrix config JSON")->required()->check(CLI::ExistingFile);
  matrix_cmd->add_option("--out", mx.out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << TELEVIT_VERSION << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitConfig;
  }

  const CLI::App* sub = app.get_subcommands().front();
  Manifest manifest{sub->get_name(), args};
  try {
    if (sub == cubegen) return cmd_cubegen(gen, manifest, err);
    if (sub == coarsen_cmd) return cmd_coarsen(co, manifest, err);
    if (sub == train_cmd) return cmd_train(tr, manifest, err);
    if (sub == init_cmd) return cmd_init(in, manifest, err);
    if (sub == eval_cmd) return cmd_eval(ev, manifest, err);
    if (sub == predict_cmd) return cmd_predict(pr, manifest, err);
    if (sub == attn_cmd) return cmd_attn(at, manifest, err);
    if (sub == matrix_cmd) return cmd_matrix(mx, manifest, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace televit::cli
