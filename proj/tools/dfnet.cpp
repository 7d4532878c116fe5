// dfnet command line: dataset generation, training, evaluation and the
// three ablation sweeps.

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dfnet/config.hpp"
#include "dfnet/csv.hpp"
#include "dfnet/harness.hpp"
#include "dfnet/synthdata.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  bool resume = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool with_resume) {
  cmd->add_option("--config", flags.config, "Run config file (key = value lines)");
  cmd->add_option("--seed", flags.seed, "Override the run seed");
  cmd->add_option("--out", flags.out, "Output directory");
  cmd->add_option("--set", flags.overrides, "Extra key=value overrides, applied after the file");
  if (with_resume) cmd->add_flag("--resume", flags.resume, "Skip sweep rows already in the CSV");
}

dfnet::RunConfig resolve(const CommonFlags& flags) {
  dfnet::RunConfig cfg = flags.config.empty() ? dfnet::RunConfig{} : dfnet::load_run_config(flags.config);
  for (const auto& o : flags.overrides) dfnet::apply_override(cfg, o);
  if (flags.seed) cfg.seed = *flags.seed;
  if (!flags.out.empty()) cfg.out_dir = flags.out;
  cfg.validate();
  return cfg;
}

void print_rows(const std::string& column, const std::vector<dfnet::SweepRow>& rows) {
  std::cout << column << ",pacc,mpacc,miou\n";
  for (const auto& r : rows) {
    std::cout << r.key << ',' << dfnet::format_double(r.metrics.pacc) << ','
              << dfnet::format_double(r.metrics.mpacc) << ',' << dfnet::format_double(r.metrics.miou) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segmentation with dynamic class weights and residual fusion blocks"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, eval_flags, alpha_flags, rfb_flags, aux_flags;

  auto* gen = app.add_subcommand("gen", "Render the synthetic dataset as PPM/PGM pairs");
  add_common(gen, gen_flags, false);

  auto* train = app.add_subcommand("train", "Train one model and evaluate it");
  add_common(train, train_flags, false);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and dump predicted label maps");
  add_common(eval, eval_flags, false);
  std::string checkpoint, eval_data, split_name = "test";
  eval->add_option("--checkpoint", checkpoint, "Checkpoint (.dfnk)")->required();
  eval->add_option("--data", eval_data, "PPM/PGM directory to evaluate instead of a split");
  eval->add_option("--split", split_name, "train|val|test")->check(CLI::IsMember({"train", "val", "test"}));

  auto* alpha = app.add_subcommand("sweep-alpha", "Uniform baseline plus one run per alpha");
  add_common(alpha, alpha_flags, true);
  std::vector<double> alphas{3, 5, 7, 10, 50};
  alpha->add_option("--alphas", alphas, "Upper weight thresholds")->delimiter(',');

  auto* rfb = app.add_subcommand("sweep-rfb", "One run per refinement block structure");
  add_common(rfb, rfb_flags, true);

  auto* aux = app.add_subcommand("sweep-aux", "One run per aux-loss tap");
  add_common(aux, aux_flags, true);
  bool with_control = false;
  aux->add_flag("--with-control", with_control, "Also run without an aux loss");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      auto cfg = resolve(gen_flags);
      if (gen_flags.seed) cfg.data.seed = *gen_flags.seed;
      const auto data = dfnet::generate(cfg.data, cfg.scenes);
      const std::filesystem::path dir = cfg.out_dir;
      dfnet::dump_dataset(dir, data);
      std::cout << "wrote " << data.size() << " scenes to " << dir.string() << " (background fraction "
                << dfnet::background_fraction(data) << ")\n";
    } else if (train->parsed()) {
      const auto cfg = resolve(train_flags);
      const auto rep = dfnet::train(cfg, dfnet::TrainOptions{true, &std::cout});
      std::cout << dfnet::report_csv_header(cfg.model.classes) << '\n'
                << dfnet::report_csv_row("val", rep.val.metrics) << '\n'
                << dfnet::report_csv_row("test", rep.test.metrics) << '\n'
                << "checkpoint " << rep.checkpoint.string() << '\n';
    } else if (eval->parsed()) {
      const auto cfg = resolve(eval_flags);
      dfnet::Dataset data;
      if (!eval_data.empty()) {
        data = dfnet::load_dataset(eval_data);
      } else {
        auto parts = dfnet::prepare_data(cfg);
        data = split_name == "train" ? parts.train : split_name == "val" ? parts.val : parts.test;
      }
      const std::filesystem::path out = cfg.out_dir;
      const auto ev = dfnet::evaluate_checkpoint(cfg.model, checkpoint, data, out / "predictions");
      std::ofstream csv(out / "eval_report.csv", std::ios::trunc);
      csv << dfnet::report_csv_header(cfg.model.classes) << '\n'
          << dfnet::report_csv_row(split_name, ev.metrics) << '\n';
      std::cout << dfnet::report_csv_header(cfg.model.classes) << '\n'
                << dfnet::report_csv_row(split_name, ev.metrics) << '\n';
    } else if (alpha->parsed()) {
      const auto cfg = resolve(alpha_flags);
      print_rows("alpha", dfnet::sweep_alpha(cfg, alphas, {alpha_flags.resume, false, &std::cerr}));
    } else if (rfb->parsed()) {
      const auto cfg = resolve(rfb_flags);
      print_rows("rfb", dfnet::sweep_rfb(cfg, {rfb_flags.resume, false, &std::cerr}));
    } else if (aux->parsed()) {
      const auto cfg = resolve(aux_flags);
      print_rows("aux_tap", dfnet::sweep_aux(cfg, {aux_flags.resume, with_control, &std::cerr}));
    }
  } catch (const std::exception& e) {
    std::cerr << "dfnet: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
