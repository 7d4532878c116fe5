#include "dfnet/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "dfnet/checkpoint.hpp"
#include "dfnet/csv.hpp"
#include "dfnet/errors.hpp"
#include "dfnet/image_io.hpp"
#include "dfnet/init.hpp"

namespace dfnet {

namespace {

constexpr std::size_t kEvalBatch = 8;

std::ofstream open_text(const std::filesystem::path& path, std::ios::openmode mode = std::ios::trunc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::out | mode);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  return f;
}

}  // namespace

DatasetSplit prepare_data(const RunConfig& cfg) {
  Dataset all = cfg.data_dir.empty() ? generate(cfg.data, cfg.scenes) : load_dataset(cfg.data_dir);
  for (const auto& s : all) validate_labels(s.labels, cfg.model.classes);
  return split(all, cfg.split, cfg.data.seed);
}

Evaluation evaluate(const Model& model, const Dataset& data,
                    const std::optional<std::filesystem::path>& dump_dir) {
  if (data.empty()) throw UsageError("evaluate: empty dataset");
  NoGradGuard no_grad;
  Evaluation ev{ConfusionMatrix(model.config().classes), {}};
  for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(data.size(), start + kEvalBatch); ++i) idx.push_back(i);
    auto [images, labels] = make_batch(data, idx);
    const LabelBatch pred = argmax_channels(model.forward(images).probabilities);
    accumulate(ev.confusion, pred, labels);
    if (dump_dir) {
      for (std::size_t b = 0; b < idx.size(); ++b) {
        LabelBatch one(1, pred.h, pred.w);
        std::copy_n(pred.data.begin() + static_cast<std::ptrdiff_t>(b * pred.plane()), pred.plane(),
                    one.data.begin());
        char name[32];
        std::snprintf(name, sizeof name, "pred_%05zu.pgm", idx[b]);
        write_pgm(*dump_dir / name, one);
      }
    }
  }
  ev.metrics = report(ev.confusion);
  return ev;
}

Evaluation evaluate_checkpoint(const ModelConfig& cfg, const std::filesystem::path& checkpoint,
                               const Dataset& data,
                               const std::optional<std::filesystem::path>& dump_dir) {
  Model model(cfg, 0);
  auto params = model.parameters();
  assign_parameters(params, load_checkpoint(checkpoint));
  return evaluate(model, data, dump_dir);
}

RunReport train(const RunConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  return train_on(cfg, prepare_data(cfg), options);
}

RunReport train_on(const RunConfig& cfg, const DatasetSplit& data, const TrainOptions& options) {
  cfg.validate();
  if (data.train.empty()) throw ConfigError("train: training split is empty");
  const auto started = std::chrono::steady_clock::now();
  const std::filesystem::path out_dir = cfg.out_dir;
  const std::size_t classes = cfg.model.classes;

  Model model(cfg.model, cfg.seed);
  auto params = model.parameters();
  SgdMomentum optimizer(cfg.lr, cfg.momentum);
  auto rng = seeded_rng(cfg.seed, 0x42415443);
  std::uniform_int_distribution<std::size_t> pick(0, data.train.size() - 1);

  WeightVector global_weights;
  if (cfg.weight_mode == WeightMode::global) {
    ClassHistogram all;
    for (const auto& s : data.train) all += histogram(s.labels, classes);
    global_weights = dynamic_weights(all, cfg.weights);
  }

  RunReport rep;
  std::vector<std::vector<double>> last_good;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::vector<std::size_t> idx(cfg.batch_size);
    for (auto& i : idx) i = pick(rng);
    auto [images, labels] = make_batch(data.train, idx);

    WeightVector w;
    switch (cfg.weight_mode) {
      case WeightMode::dynamic:
        w = dynamic_weights(histogram(labels, classes), cfg.weights);
        break;
      case WeightMode::uniform:
        w = uniform_weights(classes);
        break;
      case WeightMode::global:
        w = global_weights;
        break;
    }

    const ModelOutput out = model.forward(images);
    if (out.aux_logits && (out.aux_logits->shape().h != cfg.model.input_h ||
                           out.aux_logits->shape().w != cfg.model.input_w)) {
      throw UsageError("train: aux logits are not at input resolution");
    }
    const Tensor loss = training_loss(out, labels, w, cfg.model, cfg.loss);
    if (!std::isfinite(loss.item())) {
      const auto path = out_dir / "last_good.dfnk";
      std::vector<NamedParameter> snapshot;
      for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& values = last_good.empty()
                                 ? std::vector<double>(params[i].value.data().begin(), params[i].value.data().end())
                                 : last_good[i];
        snapshot.push_back({params[i].name, Tensor(params[i].value.shape(), values)});
      }
      save_checkpoint(path, snapshot);
      std::ostringstream os;
      os << "training diverged at iteration " << it << " (loss " << loss.item()
         << "); last good parameters saved to " << path.string();
      throw DivergenceError(os.str(), path);
    }
    last_good.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      last_good[i].assign(params[i].value.data().begin(), params[i].value.data().end());
    }

    rep.loss_trace.push_back(loss.item());
    rep.weight_log.push_back(w.weights);
    zero_grads(params);
    loss.backward();
    optimizer.step(params);

    if (options.log && cfg.log_every && (it + 1) % cfg.log_every == 0) {
      *options.log << "iter " << it + 1 << "/" << cfg.iterations << " loss " << loss.item() << std::endl;
    }
  }

  rep.val = data.val.empty() ? Evaluation{ConfusionMatrix(classes), {}} : evaluate(model, data.val);
  rep.test = data.test.empty() ? Evaluation{ConfusionMatrix(classes), {}} : evaluate(model, data.test);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (options.write_outputs) {
    std::filesystem::create_directories(out_dir);
    save_run_config(out_dir / "config.txt", cfg);
    {
      auto f = open_text(out_dir / "loss_trace.csv");
      f << "iteration,loss\n";
      for (std::size_t i = 0; i < rep.loss_trace.size(); ++i) f << i << ',' << format_double(rep.loss_trace[i]) << '\n';
    }
    {
      auto f = open_text(out_dir / "weights.csv");
      f << "iteration";
      for (std::size_t c = 0; c < classes; ++c) f << ",w_" << c;
      f << '\n';
      for (std::size_t i = 0; i < rep.weight_log.size(); ++i) {
        f << i;
        for (double v : rep.weight_log[i]) f << ',' << format_double(v);
        f << '\n';
      }
    }
    rep.checkpoint = out_dir / "model.dfnk";
    save_checkpoint(rep.checkpoint, params);
    {
      auto f = open_text(out_dir / "report.csv");
      f << report_csv_header(classes) << '\n';
      if (!data.val.empty()) f << report_csv_row("val", rep.val.metrics) << '\n';
      if (!data.test.empty()) f << report_csv_row("test", rep.test.metrics) << '\n';
    }
  }
  if (options.log) {
    *options.log << "trained " << cfg.iterations << " iterations in " << rep.wall_seconds << " s\n";
  }
  rep.model.emplace(std::move(model));
  return rep;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

std::vector<SweepRow> run_sweep(const RunConfig& base, const std::string& column, const std::string& file,
                                const std::vector<std::pair<std::string, RunConfig>>& rows,
                                const SweepOptions& options) {
  const std::filesystem::path out_dir = base.out_dir;
  const auto path = out_dir / file;
  const std::string header = column + ",pacc,mpacc,miou";

  std::map<std::string, MetricsReport> done;
  bool have_header = false;
  if (options.resume && std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::string line;
    if (std::getline(in, line)) {
      if (line != header) throw ConfigError("cannot resume " + path.string() + ": unexpected header");
      have_header = true;
    }
    while (std::getline(in, line)) {
      const auto cells = split_csv(line);
      if (cells.size() != 4) continue;
      MetricsReport m;
      m.pacc = std::stod(cells[1]);
      m.mpacc = std::stod(cells[2]);
      m.miou = std::stod(cells[3]);
      done[cells[0]] = m;
    }
  }
  auto csv = open_text(path, have_header ? std::ios::app : std::ios::trunc);
  if (!have_header) csv << header << '\n' << std::flush;

  std::vector<SweepRow> result;
  for (const auto& [key, cfg] : rows) {
    if (auto it = done.find(key); it != done.end()) {
      if (options.log) *options.log << column << '=' << key << ": already done, skipping\n";
      result.push_back({key, it->second});
      continue;
    }
    RunConfig run = cfg;
    run.out_dir = (out_dir / (column + "_" + key)).string();
    if (options.log) *options.log << column << '=' << key << ": training\n";
    const RunReport rep = train(run, TrainOptions{true, options.log});
    const MetricsReport& m = rep.test.metrics;
    csv << key << ',' << format_double(m.pacc) << ',' << format_double(m.mpacc) << ','
        << format_double(m.miou) << '\n'
        << std::flush;
    result.push_back({key, m});
  }
  return result;
}

}  // namespace

std::vector<SweepRow> sweep_alpha(const RunConfig& base, const std::vector<double>& alphas,
                                  const SweepOptions& options) {
  std::vector<std::pair<std::string, RunConfig>> rows;
  RunConfig baseline = base;
  baseline.weight_mode = WeightMode::uniform;
  rows.emplace_back("uniform", baseline);
  for (double a : alphas) {
    RunConfig cfg = base;
    cfg.weight_mode = WeightMode::dynamic;
    cfg.weights.alpha = a;
    cfg.weights.validate();
    rows.emplace_back(format_double(a), cfg);
  }
  return run_sweep(base, "alpha", "sweep_alpha.csv", rows, options);
}

std::vector<SweepRow> sweep_rfb(const RunConfig& base, const SweepOptions& options) {
  std::vector<std::pair<std::string, RunConfig>> rows;
  for (std::string_view token : {"none", "a", "b", "c", "d", "e", "f"}) {
    RunConfig cfg = base;
    cfg.model.rfb = parse_rfb_token(token);
    rows.emplace_back(std::string(token), cfg);
  }
  return run_sweep(base, "rfb", "sweep_rfb.csv", rows, options);
}

std::vector<SweepRow> sweep_aux(const RunConfig& base, const SweepOptions& options) {
  std::vector<std::pair<std::string, RunConfig>> rows;
  std::vector<AuxTap> taps{AuxTap::after_layer2, AuxTap::after_layer3};
  if (options.with_control) taps.push_back(AuxTap::none);
  for (AuxTap tap : taps) {
    RunConfig cfg = base;
    cfg.model.aux_tap = tap;
    rows.emplace_back(std::string(to_string(tap)), cfg);
  }
  return run_sweep(base, "aux_tap", "sweep_aux.csv", rows, options);
}

}  // namespace dfnet
