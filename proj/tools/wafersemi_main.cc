// Copyright 2026  The wafersemi Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Command-line runner for the wafer-map pipeline.
//
//   wafersemi run --config exp.json --out runs/exp1
//   wafersemi pretrain-vae --config exp.json --seed 3

#include <cstdint>
#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wafersemi/experiment.h"

namespace {

using wafersemi::ExperimentConfig;

int Execute(const std::string& command,
            const std::function<void(const ExperimentConfig&, std::ostream*)>&
                body,
            const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::string& out,
            const std::vector<std::string>& fusion_points) {
  try {
    ExperimentConfig config =
        config_path.empty() ? ExperimentConfig{}
                            : wafersemi::LoadExperimentConfig(config_path);
    if (seed) config.seeds = {*seed};
    if (!out.empty()) config.output_dir = out;
    if (!fusion_points.empty()) {
      config.ablate_fusion_points.clear();
      for (const auto& name : fusion_points) {
        config.ablate_fusion_points.push_back(wafersemi::ParseFusionPoint(name));
      }
    }
    wafersemi::ValidateExperimentConfig(config);
    body(config, &std::cerr);
    return 0;
  } catch (const wafersemi::StepError& e) {
    std::cerr << "wafersemi " << command << ": step " << e.what() << "\n";
  } catch (const wafersemi::ConfigError& e) {
    std::cerr << "wafersemi " << command << ": config: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "wafersemi " << command << ": " << e.what() << "\n";
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised wafer-map defect classification"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> fusion_points;
  app.add_option("--config", config_path, "Experiment config (JSON)")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Run a single seed, overriding the config");
  app.add_option("--out", out, "Output directory, overriding the config");

  using Body = std::function<void(const ExperimentConfig&, std::ostream*)>;
  const std::vector<std::pair<std::string, std::pair<std::string, Body>>>
      commands = {
          {"generate", {"Write the dataset as JSONL plus class statistics",
                        wafersemi::CmdGenerate}},
          {"pretrain-vae", {"Pretrain the VAE on labeled and unlabeled maps",
                            wafersemi::CmdPretrainVae}},
          {"train-teacher", {"Train the teacher on the labeled split",
                             wafersemi::CmdTrainTeacher}},
          {"pseudo-label", {"Score the unlabeled pool and select top-K",
                            wafersemi::CmdPseudoLabel}},
          {"train-student", {"Train and fine-tune the student",
                             wafersemi::CmdTrainStudent}},
          {"evaluate", {"Evaluate teacher and student on the test split",
                        wafersemi::CmdEvaluate}},
          {"run", {"Full pipeline for every configured seed",
                   [](const ExperimentConfig& c, std::ostream* log) {
                     wafersemi::CmdRun(c, log);
                   }}},
          {"ablate", {"Compare fusion points side by side",
                      [](const ExperimentConfig& c, std::ostream* log) {
                        wafersemi::CmdAblate(c, log);
                      }}},
      };

  std::map<CLI::App*, std::pair<std::string, Body>> handlers;
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    sub->fallthrough();
    if (name == "ablate") {
      sub->add_option("--fusion-points", fusion_points,
                      "Fusion points to compare (none, after_stage1..4)")
          ->delimiter(',');
    }
    handlers[sub] = {name, entry.second};
  }

  CLI11_PARSE(app, argc, argv);

  for (const auto& [sub, handler] : handlers) {
    if (sub->parsed()) {
      return Execute(handler.first, handler.second, config_path, seed, out,
                     fusion_points);
    }
  }
  return 1;
}
