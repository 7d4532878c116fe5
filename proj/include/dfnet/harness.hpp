#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dfnet/config.hpp"
#include "dfnet/errors.hpp"
#include "dfnet/metrics.hpp"
#include "dfnet/model.hpp"
#include "dfnet/synthdata.hpp"

namespace dfnet {

/// Thrown when the training loss stops being finite. A checkpoint of the last
/// parameters that produced a finite loss is written first.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, std::filesystem::path last_good)
      : NumericError(what), last_good_(std::move(last_good)) {}
  const std::filesystem::path& last_good() const { return last_good_; }

 private:
  std::filesystem::path last_good_;
};

/// Generated (or loaded) scenes split into train/val/test.
DatasetSplit prepare_data(const RunConfig& cfg);

struct Evaluation {
  ConfusionMatrix confusion{1};
  MetricsReport metrics;
};

/// Argmax over the probability channels per pixel. When `dump_dir` is given,
/// predicted label rasters are written as pred_%05d.pgm.
Evaluation evaluate(const Model& model, const Dataset& data,
                    const std::optional<std::filesystem::path>& dump_dir = std::nullopt);

/// Builds the model from `cfg`, loads `checkpoint` and evaluates.
Evaluation evaluate_checkpoint(const ModelConfig& cfg, const std::filesystem::path& checkpoint,
                               const Dataset& data,
                               const std::optional<std::filesystem::path>& dump_dir = std::nullopt);

struct RunReport {
  std::vector<double> loss_trace;
  std::vector<std::vector<double>> weight_log;
  Evaluation val;
  Evaluation test;
  double wall_seconds = 0.0;
  std::filesystem::path checkpoint;
  std::optional<Model> model;
};

struct TrainOptions {
  /// Persist config, traces, checkpoint and report under cfg.out_dir.
  bool write_outputs = true;
  std::ostream* log = nullptr;
};

/// Per iteration: sample a batch, compute class weights from it, forward,
/// loss, backward and one momentum-SGD step. Evaluates val and test at the
/// end. Output files: config.txt, loss_trace.csv, weights.csv, model.dfnk,
/// report.csv.
RunReport train(const RunConfig& cfg, const TrainOptions& options = {});

/// Same as train() but on already prepared data.
RunReport train_on(const RunConfig& cfg, const DatasetSplit& data, const TrainOptions& options = {});

struct SweepOptions {
  /// Keep rows already present in the sweep CSV and only run missing ones.
  bool resume = false;
  /// sweep_aux only: append an aux_tap = none control row.
  bool with_control = false;
  std::ostream* log = nullptr;
};

struct SweepRow {
  std::string key;
  MetricsReport metrics;
};

/// Uniform-weights baseline plus one dynamic-weights run per alpha. Writes
/// <out_dir>/sweep_alpha.csv with columns alpha,pacc,mpacc,miou.
std::vector<SweepRow> sweep_alpha(const RunConfig& base, const std::vector<double>& alphas,
                                  const SweepOptions& options = {});
/// rfb in none,a..f. Writes <out_dir>/sweep_rfb.csv.
std::vector<SweepRow> sweep_rfb(const RunConfig& base, const SweepOptions& options = {});
/// aux_tap in after_layer2, after_layer3 (+ none). Writes <out_dir>/sweep_aux.csv.
std::vector<SweepRow> sweep_aux(const RunConfig& base, const SweepOptions& options = {});

}  // namespace dfnet
