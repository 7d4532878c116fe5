// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Long-running (the training comparison takes several minutes).

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "dfnet/checkpoint.hpp"
#include "dfnet/harness.hpp"
#include "dfnet/image_io.hpp"
#include "support/gradient_cases.hpp"
#include "support/rfb_fixtures.hpp"
#include "support/run_fixtures.hpp"
#include "support/testing.hpp"

namespace fs = std::filesystem;
using namespace dfnet;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool same_bits(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (std::bit_cast<std::uint64_t>(a.data()[i]) != std::bit_cast<std::uint64_t>(b.data()[i])) return false;
  return true;
}

void gradient_suite(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_op = 0.0, worst_e2e = 0.0;
  std::string worst_name;
  const auto cases = testing::gradient_cases();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (const auto& c : cases) {
      const double err = c.run(seed);
      if (!(err < 1e-4)) o.require(false, c.name + " seed " + std::to_string(seed));
      if (err > worst_op) {
        worst_op = err;
        worst_name = c.name;
      }
    }
    const double e2e = testing::end_to_end_error(seed);
    if (!(e2e < 1e-3)) o.require(false, "end-to-end seed " + std::to_string(seed));
    worst_e2e = std::max(worst_e2e, e2e);
  }
  const double elapsed = seconds_since(t0);
  o.require(elapsed < 120.0, "runtime");
  o.detail << cases.size() << " ops x 10 seeds, worst op " << worst_op << " (" << worst_name
           << "), worst end-to-end " << worst_e2e << ", " << elapsed << " s";
}

void weight_laws(Outcome& o) {
  auto rng = seeded_rng(2024, 1);
  const WeightConfig cfg{0.1, 5.0};
  std::size_t half_checks = 0, absent_checks = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
    const std::uint64_t m = std::uniform_int_distribution<std::uint64_t>(1, 400)(rng);
    // k classes sit exactly at the average share N/c; the others split the
    // remaining (c - k) * m pixels at random (zeros allowed).
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, c - 1)(rng);
    std::vector<std::uint64_t> counts(c, 0);
    for (std::size_t i = 0; i < k; ++i) counts[i] = m;
    std::uint64_t rest = (c - k) * m;
    for (std::size_t i = k; i + 1 < c; ++i) {
      counts[i] = std::bernoulli_distribution(0.25)(rng) ? 0 : std::uniform_int_distribution<std::uint64_t>(0, rest)(rng);
      rest -= counts[i];
    }
    counts[c - 1] = rest;
    std::shuffle(counts.begin(), counts.end(), rng);
    ClassHistogram h{counts, c * m};
    const auto w = dynamic_weights(h, cfg);
    for (std::size_t i = 0; i < c; ++i) {
      if (counts[i] == m) {
        ++half_checks;
        if (w[i] != 0.5) o.require(false, "average share gives 1/2");
      }
      if (counts[i] == 0) {
        ++absent_checks;
        if (w[i] != 1.0) o.require(false, "absent class gives 1");
      } else if (!(w[i] >= cfg.beta && w[i] <= cfg.alpha)) {
        o.require(false, "bounds");
      }
    }
    ClassHistogram doubled = h;
    doubled += h;
    if (dynamic_weights(doubled, cfg).weights != w.weights) o.require(false, "duplication");
  }
  o.detail << "1000 histograms, " << half_checks << " average-share classes, " << absent_checks
           << " absent classes";
}

void metrics_oracle(Outcome& o) {
  auto rng = seeded_rng(2024, 2);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto truth = testing::random_labels(1, 8, 8, 6, rng);
    const auto pred = testing::random_labels(1, 8, 8, 6, rng);
    ConfusionMatrix cm(6);
    accumulate(cm, pred, truth);
    const auto r = report(cm);
    const auto s = testing::set_metrics(pred, truth, 6);
    worst = std::max({worst, std::abs(r.pacc - s.pacc), std::abs(r.mpacc - s.mpacc), std::abs(r.miou - s.miou)});
    for (std::size_t k = 0; k < 6; ++k)
      worst = std::max({worst, std::abs(r.per_class_iou[k] - s.iou[k]), std::abs(r.per_class_acc[k] - s.acc[k])});
  }
  o.require(worst <= 1e-12, "tolerance");
  o.detail << "100 rasters, max deviation " << worst;
}

void rfb_suite(Outcome& o) {
  auto rng = seeded_rng(2024, 3);
  std::size_t shapes = 0;
  for (auto st : {RfbStructure::A, RfbStructure::B, RfbStructure::C, RfbStructure::D, RfbStructure::E,
                  RfbStructure::F}) {
    const RFB block(RFBSpec::of(st), 3, 7);
    for (std::size_t h : {3u, 17u, 96u})
      for (std::size_t w : {3u, 17u, 96u}) {
        const Shape s{1, 3, h, w};
        const Tensor x = softmax_channels(testing::random_tensor(s, rng, -3.0, 3.0));
        if (block.forward(x).shape() != s) o.require(false, std::string(rfb_token(st)) + " shape");
        ++shapes;
      }
  }

  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor p = softmax_channels(testing::random_tensor({2, 6, 9, 9}, rng, -6.0, 6.0));
    const Tensor q = renormalize_channels(fuse(p, p, FusionMode::multiply));
    const Shape s = q.shape();
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) {
          double total = 0.0;
          for (std::size_t c = 0; c < s.c; ++c) {
            const double v = q.at(n, c, y, x);
            if (v < 0.0) o.require(false, "negative probability");
            total += v;
          }
          worst = std::max(worst, std::abs(total - 1.0));
        }
  }
  o.require(worst <= 1e-10, "simplex");

  const RFB block(RFBSpec::of(RfbStructure::E), 2, 1);
  testing::use_mean_kernels(block);
  const auto scene = testing::two_region_step(32, 32);
  const auto rep = boundary_effect(block, scene.input, scene.labels);
  const bool have = rep.mean_change.size() > 5 && rep.pixels[1] > 0 && rep.pixels[5] > 0;
  o.require(have && rep.mean_change[1] > rep.mean_change[5], "boundary effect");
  o.detail << shapes << " shape checks, simplex deviation " << worst;
  if (have) o.detail << ", change at distance 1 = " << rep.mean_change[1] << " vs 5 = " << rep.mean_change[5];
}

void directional(Outcome& o, const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig cfg;
    cfg.seed = seed;
    cfg.data.seed = seed;
    cfg.out_dir = (work / "directional").string();
    cfg.weights = {0.1, 5.0};
    const auto data = prepare_data(cfg);
    const double bg = background_fraction(data.train);
    o.require(bg >= 0.8, "background fraction seed " + std::to_string(seed));

    cfg.weight_mode = WeightMode::uniform;
    const double uniform = train_on(cfg, data, {false, nullptr}).test.metrics.mean_acc_from(1);
    cfg.weight_mode = WeightMode::dynamic;
    const double dynamic = train_on(cfg, data, {false, nullptr}).test.metrics.mean_acc_from(1);
    wins += dynamic > uniform;
    o.detail << " seed " << seed << ": bg " << bg << ", minority mpacc dynamic " << dynamic << " vs uniform "
             << uniform << ";";
    std::cerr << "  directional seed " << seed << " done after " << seconds_since(t0) << " s\n";
  }
  const double elapsed = seconds_since(t0);
  o.require(wins >= 4, "majority");
  o.require(elapsed < 900.0, "runtime");
  o.detail << " dynamic ahead in " << wins << "/5, " << elapsed << " s";
}

void determinism(Outcome& o, const fs::path& work) {
  RunConfig cfg = testing::tiny_run_config(work / "det_a", 11);
  cfg.model.rfb = RfbStructure::F;
  cfg.iterations = 20;
  const auto a = train(cfg);
  cfg.out_dir = (work / "det_b").string();
  const auto b = train(cfg);
  o.require(a.loss_trace == b.loss_trace, "loss trace");
  for (const char* f : {"loss_trace.csv", "weights.csv", "report.csv", "model.dfnk"})
    o.require(testing::slurp(work / "det_a" / f) == testing::slurp(work / "det_b" / f), f);
  // The saved configs differ only in where they were written.
  RunConfig saved_a = load_run_config(work / "det_a" / "config.txt");
  RunConfig saved_b = load_run_config(work / "det_b" / "config.txt");
  saved_b.out_dir = saved_a.out_dir;
  o.require(serialize_run_config(saved_a) == serialize_run_config(saved_b), "config.txt");

  RunConfig sweep = testing::tiny_run_config(work / "det_sweep_a", 12);
  sweep.iterations = 3;
  sweep_aux(sweep);
  sweep.out_dir = (work / "det_sweep_b").string();
  sweep_aux(sweep);
  o.require(testing::slurp(work / "det_sweep_a" / "sweep_aux.csv") ==
                testing::slurp(work / "det_sweep_b" / "sweep_aux.csv"),
            "sweep csv");

  const auto params = a.model->parameters();
  const auto loaded = load_checkpoint(a.checkpoint);
  bool exact = loaded.size() == params.size();
  for (std::size_t i = 0; exact && i < params.size(); ++i)
    exact = loaded[i].name == params[i].name && same_bits(loaded[i].value, params[i].value);
  o.require(exact, "checkpoint round trip");

  const auto data = generate(SceneSpec{}, 4);
  dump_dataset(work / "dump", data);
  const auto back = load_dataset(work / "dump");
  bool images = back.size() == data.size();
  for (std::size_t i = 0; images && i < data.size(); ++i)
    images = same_bits(back[i].image, data[i].image) && back[i].labels.data == data[i].labels.data;
  o.require(images, "ppm/pgm reload");
  o.detail << "2 runs + 2 sweeps compared, " << params.size() << " checkpoint tensors, " << data.size()
           << " scenes reloaded";
}

void sweep_shapes(Outcome& o, const fs::path& work) {
  RunConfig base = testing::tiny_run_config(work / "sweeps", 13);
  base.iterations = 3;
  const auto alpha = sweep_alpha(base, {3, 5, 7, 10, 50});
  const auto rfb = sweep_rfb(base);
  const auto aux = sweep_aux(base);
  o.require(alpha.size() == 6 && testing::line_count(work / "sweeps" / "sweep_alpha.csv") == 7, "alpha rows");
  o.require(rfb.size() == 7 && testing::line_count(work / "sweeps" / "sweep_rfb.csv") == 8, "rfb rows");
  o.require(aux.size() == 2 && testing::line_count(work / "sweeps" / "sweep_aux.csv") == 3, "aux rows");
  for (const auto* rows : {&alpha, &rfb, &aux})
    for (const auto& r : *rows)
      for (double v : {r.metrics.pacc, r.metrics.mpacc, r.metrics.miou})
        if (!(v >= 0.0 && v <= 1.0)) o.require(false, "metric range");
  o.detail << "rows alpha " << alpha.size() << ", rfb " << rfb.size() << ", aux " << aux.size();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dfnet acceptance checks"};
  fs::path work = fs::temp_directory_path() / "dfnet_acceptance";
  bool skip_training = false;
  app.add_option("--work-dir", work, "Scratch directory for runs");
  app.add_flag("--skip-training", skip_training, "Skip the long training comparison");
  CLI11_PARSE(app, argc, argv);
  fs::remove_all(work);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"gradient-suite", gradient_suite},
      {"weight-laws", weight_laws},
      {"metrics-oracle", metrics_oracle},
      {"rfb-structure", rfb_suite},
      {"dynamic-vs-uniform", [&](Outcome& o) {
         if (skip_training) {
           o.require(false, "skipped");
           return;
         }
         directional(o, work);
       }},
      {"determinism-persistence", [&](Outcome& o) { determinism(o, work); }},
      {"sweep-shapes", [&](Outcome& o) { sweep_shapes(o, work); }},
  };

  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      check(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ":" << (o.detail.str().starts_with(" ") ? "" : " ")
              << o.detail.str() << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
