// Copyright 2026 The hamalign Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line driver for training, evaluation and the experiment protocols.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hamalign/harness/gradcheck_suite.hpp"
#include "hamalign/harness/train.hpp"

namespace {

using namespace hamalign;
using namespace hamalign::harness;
namespace fs = std::filesystem;

std::vector<std::size_t> parse_k_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw UsageError("--k: expected a comma-separated list of positive integers, got \"" + text + "\"");
    }
    out.push_back(std::stoul(item));
  }
  if (out.empty()) throw UsageError("--k: empty list");
  return out;
}

void print_record(const MetricsRecord& r) {
  std::fprintf(stderr, "epoch %zu  l_det %s  l_adv %s  disc_acc %s  target_ap %s  source_ap %s\n", r.epoch,
               format_fixed(r.l_det).c_str(), format_fixed(r.l_adv).c_str(), format_fixed(r.disc_acc).c_str(),
               format_fixed(r.target_ap).c_str(), format_fixed(r.source_ap).c_str());
}

int cmd_train(const std::string& config, const std::string& out) {
  const TrainConfig cfg = load_train_config(config);
  std::fprintf(stderr, "train: %s, seed %llu, %zu epochs -> %s\n", cfg.row_name().c_str(),
               static_cast<unsigned long long>(cfg.seed), cfg.epochs, out.c_str());
  train_to_dir(cfg, out, print_record);
  std::printf("%s\n%s\n", (fs::path(out) / kCheckpointFile).string().c_str(),
              (fs::path(out) / kMetricsFile).string().c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& domain_text, std::size_t count) {
  const Domain domain = parse_domain(domain_text);
  auto [cfg, model] = load_trained(ckpt);
  if (count > 0) cfg.eval_images = count;
  const EvalSet set = EvalSet::make(cfg);
  const auto& samples = domain == Domain::source ? set.source : set.target;
  const auto ap = evaluate_ap(model, samples, 0.5);
  std::printf("domain=%s images=%zu iou=0.5 ap_method=all-point-interpolation ap=%s\n", domain_name(domain),
              samples.size(), ap ? format_fixed(*ap).c_str() : "absent");
  return 0;
}

int cmd_gradcheck(std::size_t instances, double tolerance) {
  bool ok = true;
  for (const NamedCheck& c : op_grad_checks(0)) {
    const bool pass = c.result.max_rel_error < tolerance;
    ok = ok && pass;
    std::printf("%-30s max_rel_error %.3e  %s\n", c.name.c_str(), c.result.max_rel_error, pass ? "ok" : "FAIL");
  }
  for (std::size_t s = 0; s < instances; ++s) {
    const GradCheckResult r = composite_grad_check(s);
    const bool pass = r.max_rel_error < tolerance;
    ok = ok && pass;
    std::printf("composite seed %-15zu max_rel_error %.3e  one_sided %zu skipped %zu  %s\n", s, r.max_rel_error,
                r.one_sided, r.skipped, pass ? "ok" : "FAIL");
  }
  std::printf("%s\n", ok ? "gradcheck passed" : "gradcheck FAILED");
  return ok ? 0 : 1;
}

int cmd_sweep_k(const std::string& config, const std::string& k_text, const std::string& out) {
  const TrainConfig base = load_train_config(config);
  const std::vector<SweepRow> rows = sweep_k(base, parse_k_list(k_text), std::cerr, out);
  const std::string csv = sweep_csv(rows);
  if (!out.empty()) write_text_file((fs::path(out) / "sweep_k.csv").string(), csv);
  std::printf("%s", csv.c_str());
  return 0;
}

int cmd_dump_attention(const std::string& ckpt, std::uint64_t image_seed, const std::string& domain_text,
                       const std::string& out) {
  const Domain domain = parse_domain(domain_text);
  const auto [cfg, model] = load_trained(ckpt);
  Rng rng(image_seed);
  const auto scenes = generate_scenes(domain, 1, rng, cfg.generator());
  for (const std::string& path : dump_attention(model, scenes.front().image, out)) std::printf("%s\n", path.c_str());
  return 0;
}

int cmd_ablate(const std::string& config, const std::string& out) {
  const TrainConfig base = load_train_config(config);
  const std::vector<AblationRow> rows = ablate(base, out, &std::cerr);
  const std::string csv = ablation_csv(rows);
  write_text_file((fs::path(out) / "ablation.csv").string(), csv);
  std::printf("%s", csv.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid attention alignment for a toy set-prediction detector"};
  app.require_subcommand(1);

  std::string config, out, ckpt, domain = "source", k_text;
  std::size_t count = 0, instances = 20;
  std::uint64_t image_seed = 0;
  double tolerance = 1e-4;

  auto* train = app.add_subcommand("train", "Train one configuration");
  train->add_option("--config", config, "JSON training configuration")->required();
  train->add_option("--out", out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "AP@0.5 of a checkpoint on held-out scenes");
  eval->add_option("--ckpt", ckpt, "Checkpoint (config.json must sit next to it)")->required();
  eval->add_option("--domain", domain, "source or target")->required();
  eval->add_option("--count", count, "Number of held-out images (default: eval_images)");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grad->add_option("--instances", instances, "Composite instances")->capture_default_str();
  grad->add_option("--tolerance", tolerance, "Maximum relative error")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep-k", "Train and evaluate once per group count K");
  sweep->add_option("--config", config, "Base JSON configuration")->required();
  sweep->add_option("--k", k_text, "Comma-separated K values, e.g. 1,2,4")->required();
  sweep->add_option("--out", out, "Directory for per-K runs and sweep_k.csv");

  auto* dump = app.add_subcommand("dump-attention", "Write attention maps of one scene as PGM rasters");
  dump->add_option("--ckpt", ckpt, "Checkpoint (config.json must sit next to it)")->required();
  dump->add_option("--image-seed", image_seed, "Seed of the rendered scene")->required();
  dump->add_option("--out", out, "Output directory")->required();
  dump->add_option("--domain", domain, "source or target")->capture_default_str();

  auto* abl = app.add_subcommand("ablate", "Run the baseline and all six alignment rows");
  abl->add_option("--config", config, "Base JSON configuration")->required();
  out = "";
  abl->add_option("--out", out, "Output directory (default: ablation)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(config, out);
    if (*eval) return cmd_eval(ckpt, domain, count);
    if (*grad) return cmd_gradcheck(instances, tolerance);
    if (*sweep) return cmd_sweep_k(config, k_text, out);
    if (*dump) return cmd_dump_attention(ckpt, image_seed, domain, out);
    if (*abl) return cmd_ablate(config, out.empty() ? "ablation" : out);
  } catch (const hamalign::UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const hamalign::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
