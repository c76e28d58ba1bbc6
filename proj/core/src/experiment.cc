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

#include "wafersemi/experiment.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace wafersemi {

using Json = nlohmann::ordered_json;

namespace {

// Strict view of one config object: every key must be claimed by a reader
// before Finish().
class Section {
 public:
  Section(const Json& json, std::string path)
      : json_(json), path_(std::move(path)) {
    if (!json_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  const Json* Find(const std::string& key) {
    claimed_.insert(key);
    auto it = json_.find(key);
    return it == json_.end() ? nullptr : &*it;
  }

  void Count(const std::string& key, std::size_t& out) {
    if (const Json* v = Find(key)) out = CountValue(*v, Where(key));
  }

  void Seed(const std::string& key, std::uint64_t& out) {
    if (const Json* v = Find(key)) out = SeedValue(*v, Where(key));
  }

  void Real(const std::string& key, double& out) {
    if (const Json* v = Find(key)) {
      if (!v->is_number()) throw ConfigError(Where(key) + ": expected a number");
      out = v->get<double>();
    }
  }

  void Flag(const std::string& key, bool& out) {
    if (const Json* v = Find(key)) {
      if (!v->is_boolean()) throw ConfigError(Where(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }

  void Text(const std::string& key, std::string& out) {
    if (const Json* v = Find(key)) {
      if (!v->is_string()) throw ConfigError(Where(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }

  template <std::size_t N>
  void Counts(const std::string& key, std::array<std::size_t, N>& out) {
    const Json* v = Find(key);
    if (!v) return;
    if (!v->is_array() || v->size() != N) {
      throw ConfigError(Where(key) + ": expected an array of " +
                        std::to_string(N) + " integers");
    }
    for (std::size_t i = 0; i < N; ++i) out[i] = CountValue((*v)[i], Where(key));
  }

  void Finish() const {
    for (const auto& [key, value] : json_.items()) {
      if (!claimed_.contains(key)) throw ConfigError("unknown key " + Where(key));
    }
  }

  std::string Where(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  static std::size_t CountValue(const Json& v, const std::string& where) {
    if (!v.is_number_unsigned()) {
      throw ConfigError(where + ": expected a non-negative integer");
    }
    return v.get<std::size_t>();
  }

  static std::uint64_t SeedValue(const Json& v, const std::string& where) {
    if (!v.is_number_unsigned()) {
      throw ConfigError(where + ": expected a non-negative integer seed");
    }
    return v.get<std::uint64_t>();
  }

 private:
  const Json& json_;
  std::string path_;
  std::set<std::string> claimed_;
};

FusionPoint FusionValue(const Json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where + ": expected a fusion point name");
  try {
    return ParseFusionPoint(v.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

void ReadData(Section s, DataSection& d) {
  s.Text("source", d.source);
  if (const Json* v = s.Find("path")) {
    if (!v->is_string()) throw ConfigError("data.path: expected a string");
    d.path = v->get<std::string>();
  }
  s.Count("num_maps", d.num_maps);
  s.Count("grid_size", d.grid_size);
  s.Real("noise_rate", d.noise_rate);
  if (const Json* v = s.Find("class_weights")) {
    if (v->is_string()) {
      const auto name = v->get<std::string>();
      if (name == "uniform") {
        d.class_weights = UniformClassWeights();
      } else if (name == "wm811k") {
        d.class_weights = Wm811kClassWeights();
      } else {
        throw ConfigError("data.class_weights: unknown preset " + name);
      }
    } else if (v->is_array() && v->size() == kNumClasses) {
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (!(*v)[c].is_number()) {
          throw ConfigError("data.class_weights: expected numbers");
        }
        d.class_weights[c] = (*v)[c].get<double>();
      }
    } else {
      throw ConfigError(
          "data.class_weights: expected \"uniform\", \"wm811k\" or 9 numbers");
    }
  }
  if (const Json* v = s.Find("split")) {
    Section split(*v, "data.split");
    split.Real("labeled", d.split.labeled);
    split.Real("unlabeled", d.split.unlabeled);
    split.Real("test", d.split.test);
    split.Finish();
  }
  s.Count("balance_target", d.balance_target);
  s.Seed("seed", d.seed);
  s.Finish();
}

void ReadVae(Section s, VaeSection& v) {
  s.Count("latent_dim", v.latent_dim);
  s.Count("epochs", v.epochs);
  s.Count("batch_size", v.batch_size);
  s.Real("lr", v.lr);
  s.Real("kl_weight", v.kl_weight);
  s.Flag("recenter_latents", v.recenter_latents);
  s.Counts("channels", v.channels);
  s.Finish();
}

void ReadNetwork(Section s, NetworkSection& n) {
  s.Count("stem_channels", n.stem_channels);
  s.Counts("block_counts", n.block_counts);
  s.Counts("widths", n.widths);
  s.Count("expansion", n.expansion);
  if (const Json* v = s.Find("fusion_point")) {
    n.fusion_point = FusionValue(*v, "network.fusion_point");
  }
  s.Finish();
}

void ReadTrain(Section s, TrainSection& t) {
  s.Count("teacher_epochs", t.teacher_epochs);
  s.Count("student_epochs", t.student_epochs);
  s.Count("batch_size", t.batch_size);
  s.Real("lr", t.lr);
  s.Real("beta1", t.beta1);
  s.Real("beta2", t.beta2);
  s.Real("epsilon", t.epsilon);
  s.Finish();
}

void ReadSemisup(Section s, SemisupSection& p) {
  s.Real("confidence_threshold", p.confidence_threshold);
  s.Count("top_k", p.top_k);
  s.Count("fine_tune_epochs", p.fine_tune_epochs);
  s.Real("fine_tune_lr_divisor", p.fine_tune_lr_divisor);
  s.Finish();
}

void Check(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

std::string ReadTextFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

void WriteTextFile(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  out.close();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void WriteJson(const std::filesystem::path& path, const Json& json) {
  WriteTextFile(path, json.dump(2) + "\n");
}

Json ReadJson(const std::filesystem::path& path) {
  try {
    return Json::parse(ReadTextFile(path));
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

template <typename F>
auto RunStep(const std::string& step, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StepError&) {
    throw;
  } catch (const std::exception& e) {
    throw StepError(step, e.what());
  }
}

void Log(std::ostream* log, const std::string& line) {
  if (log) *log << line << std::endl;
}

std::string Fixed(double value, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
  return buf;
}

std::uint64_t StepSeed(const ExperimentConfig& config) {
  Check(!config.seeds.empty(), "seeds must not be empty");
  return config.seeds.front();
}

// Data, split and shape shared by every stepwise command.
struct Prepared {
  std::vector<WaferMap> data;
  DatasetSplit split;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::uint64_t seed = 0;
};

Prepared Prepare(const ExperimentConfig& config) {
  ValidateExperimentConfig(config);
  Prepared p;
  p.seed = StepSeed(config);
  p.data = RunStep("load-data", [&] { return LoadDataset(config); });
  p.rows = p.data.front().rows();
  p.cols = p.data.front().cols();
  p.split = RunStep("split", [&] { return PrepareSplit(config, p.data, p.seed); });
  return p;
}

Checkpoint LoadStepCheckpoint(const std::filesystem::path& path,
                              std::uint64_t seed) {
  Checkpoint checkpoint = LoadCheckpoint(path);
  const auto stored = checkpoint.header.value("seed", std::uint64_t{0});
  if (stored != seed) {
    throw std::runtime_error(path.string() + " was written for seed " +
                             std::to_string(stored) + ", not " +
                             std::to_string(seed));
  }
  return checkpoint;
}

std::optional<Vae> LoadStepVae(const ExperimentConfig& config,
                               std::uint64_t seed) {
  if (config.network.fusion_point == FusionPoint::kNone) return std::nullopt;
  return LoadVae(LoadStepCheckpoint(config.output_dir / files::kVae, seed));
}

Json PseudoLabelsToJson(std::span<const PseudoLabel> labels) {
  Json out = Json::array();
  for (const PseudoLabel& p : labels) {
    Json j;
    j["id"] = p.example_id;
    j["class"] = p.predicted_class;
    j["confidence"] = p.confidence;
    out.push_back(std::move(j));
  }
  return out;
}

std::vector<PseudoLabel> PseudoLabelsFromJson(const Json& json) {
  std::vector<PseudoLabel> out;
  for (const Json& j : json) {
    out.push_back({j.at("id").get<std::string>(), j.at("class").get<int>(),
                   j.at("confidence").get<double>()});
  }
  return out;
}

Json VaeHistoryToJson(std::span<const VaeEpochStats> history) {
  Json loss = Json::array(), recon = Json::array(), kl = Json::array();
  for (const VaeEpochStats& e : history) {
    loss.push_back(e.loss);
    recon.push_back(e.reconstruction);
    kl.push_back(e.kl);
  }
  Json j;
  j["loss"] = std::move(loss);
  j["reconstruction"] = std::move(recon);
  j["kl"] = std::move(kl);
  return j;
}

Json SplitSummary(const DatasetSplit& split) {
  Json j;
  j["labeled"] = split.labeled.size();
  j["unlabeled"] = split.unlabeled.size();
  j["test"] = split.test.size();
  Json counts = Json::object();
  const auto hist = CountClasses(split.labeled);
  for (int c = 0; c < kNumClasses; ++c) {
    counts[std::string(PatternName(c))] = hist[static_cast<std::size_t>(c)];
  }
  j["labeled_per_class"] = std::move(counts);
  return j;
}

struct Stat {
  double mean = 0.0, std = 0.0, min = 0.0, max = 0.0;
};

Stat Describe(std::span<const double> values) {
  Stat s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / n;
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / n);
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  // Rounding in the sum can leave the mean an ulp outside the range.
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

Json StatToJson(std::span<const double> values) {
  const Stat s = Describe(values);
  Json j;
  j["mean"] = s.mean;
  j["std"] = s.std;
  j["min"] = s.min;
  j["max"] = s.max;
  j["values"] = std::vector<double>(values.begin(), values.end());
  return j;
}

Json MetricStats(std::span<const MetricsReport* const> reports) {
  std::vector<double> p, r, f1, acc;
  for (const MetricsReport* m : reports) {
    p.push_back(m->macro_precision);
    r.push_back(m->macro_recall);
    f1.push_back(m->macro_f1);
    acc.push_back(m->accuracy);
  }
  Json j;
  j["macro_precision"] = StatToJson(p);
  j["macro_recall"] = StatToJson(r);
  j["macro_f1"] = StatToJson(f1);
  j["accuracy"] = StatToJson(acc);
  return j;
}

std::string RenderSummary(const Json& summary) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %-16s %-18s %-18s\n", "model",
                "metric", "mean +- std", "min .. max");
  out << line;
  for (const char* model : {"teacher", "student"}) {
    for (const char* metric :
         {"macro_precision", "macro_recall", "macro_f1", "accuracy"}) {
      const Json& s = summary.at(model).at(metric);
      const std::string ms = Fixed(s.at("mean").get<double>()) + " +- " +
                             Fixed(s.at("std").get<double>());
      const std::string range = Fixed(s.at("min").get<double>()) + " .. " +
                                Fixed(s.at("max").get<double>());
      std::snprintf(line, sizeof(line), "%-10s %-16s %-18s %-18s\n", model,
                    metric, ms.c_str(), range.c_str());
      out << line;
    }
  }
  const Json& pl = summary.at("pseudo_labels").at("accuracy_selected");
  out << "pseudo-label accuracy (selected): "
      << Fixed(pl.at("mean").get<double>()) << " +- "
      << Fixed(pl.at("std").get<double>()) << "\n";
  return out.str();
}

}  // namespace

ExperimentConfig ParseExperimentConfig(const std::string& text) {
  Json json;
  try {
    json = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig config;
  Section root(json, "");
  if (const Json* v = root.Find("data")) ReadData(Section(*v, "data"), config.data);
  if (const Json* v = root.Find("vae")) ReadVae(Section(*v, "vae"), config.vae);
  if (const Json* v = root.Find("network")) {
    ReadNetwork(Section(*v, "network"), config.network);
  }
  if (const Json* v = root.Find("train")) {
    ReadTrain(Section(*v, "train"), config.train);
  }
  if (const Json* v = root.Find("semisup")) {
    ReadSemisup(Section(*v, "semisup"), config.semisup);
  }
  if (const Json* v = root.Find("seeds")) {
    if (!v->is_array()) throw ConfigError("seeds: expected an array");
    config.seeds.clear();
    for (const Json& s : *v) config.seeds.push_back(Section::SeedValue(s, "seeds"));
  }
  if (const Json* v = root.Find("output_dir")) {
    if (!v->is_string()) throw ConfigError("output_dir: expected a string");
    config.output_dir = v->get<std::string>();
  }
  if (const Json* v = root.Find("ablate")) {
    Section ablate(*v, "ablate");
    if (const Json* points = ablate.Find("fusion_points")) {
      if (!points->is_array()) {
        throw ConfigError("ablate.fusion_points: expected an array");
      }
      config.ablate_fusion_points.clear();
      for (const Json& p : *points) {
        config.ablate_fusion_points.push_back(
            FusionValue(p, "ablate.fusion_points"));
      }
    }
    ablate.Finish();
  }
  root.Finish();
  ValidateExperimentConfig(config);
  return config;
}

ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path) {
  return ParseExperimentConfig(ReadTextFile(path));
}

void ValidateExperimentConfig(const ExperimentConfig& c) {
  const DataSection& d = c.data;
  Check(d.source == "synthetic" || d.source == "jsonl",
        "data.source must be \"synthetic\" or \"jsonl\"");
  Check(d.source != "jsonl" || !d.path.empty(),
        "data.path is required when data.source is \"jsonl\"");
  if (d.source == "synthetic") {
    Check(d.num_maps >= 1, "data.num_maps must be at least 1");
    Check(d.grid_size % 2 == 1 && d.grid_size >= 15 && d.grid_size <= 255,
          "data.grid_size must be odd and within 15..255");
    Check(d.noise_rate >= 0.0 && d.noise_rate <= 0.2,
          "data.noise_rate must lie in [0, 0.2]");
    double total = 0.0;
    for (double w : d.class_weights) {
      Check(std::isfinite(w) && w >= 0.0, "data.class_weights must be >= 0");
      total += w;
    }
    Check(total > 0.0, "data.class_weights must not all be zero");
  }
  Check(d.split.labeled > 0.0 && d.split.unlabeled > 0.0 && d.split.test > 0.0,
        "data.split fractions must be positive");
  Check(std::abs(d.split.labeled + d.split.unlabeled + d.split.test - 1.0) <=
            1e-9,
        "data.split fractions must sum to 1");

  Check(c.vae.latent_dim >= 1, "vae.latent_dim must be at least 1");
  Check(c.vae.epochs >= 1, "vae.epochs must be at least 1");
  Check(c.vae.batch_size >= 1, "vae.batch_size must be at least 1");
  Check(c.vae.lr > 0.0, "vae.lr must be positive");
  Check(c.vae.kl_weight >= 0.0, "vae.kl_weight must be >= 0");
  for (std::size_t ch : c.vae.channels) {
    Check(ch >= 1, "vae.channels must be positive");
  }

  Check(c.train.teacher_epochs >= 1, "train.teacher_epochs must be at least 1");
  Check(c.train.student_epochs >= 1, "train.student_epochs must be at least 1");
  Check(c.train.batch_size >= 1, "train.batch_size must be at least 1");
  Check(c.train.lr > 0.0, "train.lr must be positive");
  Check(c.train.beta1 >= 0.0 && c.train.beta1 < 1.0,
        "train.beta1 must lie in [0, 1)");
  Check(c.train.beta2 >= 0.0 && c.train.beta2 < 1.0,
        "train.beta2 must lie in [0, 1)");
  Check(c.train.epsilon > 0.0, "train.epsilon must be positive");

  Check(!c.seeds.empty(), "seeds must not be empty");
  std::set<std::uint64_t> unique(c.seeds.begin(), c.seeds.end());
  Check(unique.size() == c.seeds.size(), "seeds must be distinct");
  Check(!c.output_dir.empty(), "output_dir must not be empty");

  std::set<FusionPoint> points(c.ablate_fusion_points.begin(),
                               c.ablate_fusion_points.end());
  Check(points.size() == c.ablate_fusion_points.size(),
        "ablate.fusion_points must be distinct");

  try {
    const std::size_t size = d.source == "synthetic" ? d.grid_size : 27;
    ValidatePipelineConfig(MakePipelineConfig(c, size, size, 0));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

Json ExperimentConfigToJson(const ExperimentConfig& c) {
  Json data;
  data["source"] = c.data.source;
  data["path"] = c.data.path.string();
  data["num_maps"] = c.data.num_maps;
  data["grid_size"] = c.data.grid_size;
  data["noise_rate"] = c.data.noise_rate;
  data["class_weights"] = c.data.class_weights;
  data["split"] = {{"labeled", c.data.split.labeled},
                   {"unlabeled", c.data.split.unlabeled},
                   {"test", c.data.split.test}};
  data["balance_target"] = c.data.balance_target;
  data["seed"] = c.data.seed;

  Json vae;
  vae["latent_dim"] = c.vae.latent_dim;
  vae["epochs"] = c.vae.epochs;
  vae["batch_size"] = c.vae.batch_size;
  vae["lr"] = c.vae.lr;
  vae["kl_weight"] = c.vae.kl_weight;
  vae["recenter_latents"] = c.vae.recenter_latents;
  vae["channels"] = c.vae.channels;

  Json network;
  network["stem_channels"] = c.network.stem_channels;
  network["block_counts"] = c.network.block_counts;
  network["widths"] = c.network.widths;
  network["expansion"] = c.network.expansion;
  network["fusion_point"] = FusionPointName(c.network.fusion_point);

  Json train;
  train["teacher_epochs"] = c.train.teacher_epochs;
  train["student_epochs"] = c.train.student_epochs;
  train["batch_size"] = c.train.batch_size;
  train["lr"] = c.train.lr;
  train["beta1"] = c.train.beta1;
  train["beta2"] = c.train.beta2;
  train["epsilon"] = c.train.epsilon;

  Json semisup;
  semisup["confidence_threshold"] = c.semisup.confidence_threshold;
  semisup["top_k"] = c.semisup.top_k;
  semisup["fine_tune_epochs"] = c.semisup.fine_tune_epochs;
  semisup["fine_tune_lr_divisor"] = c.semisup.fine_tune_lr_divisor;

  Json points = Json::array();
  for (FusionPoint p : c.ablate_fusion_points) points.push_back(FusionPointName(p));

  Json j;
  j["data"] = std::move(data);
  j["vae"] = std::move(vae);
  j["network"] = std::move(network);
  j["train"] = std::move(train);
  j["semisup"] = std::move(semisup);
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir.string();
  j["ablate"] = {{"fusion_points", std::move(points)}};
  return j;
}

StepError::StepError(std::string step, const std::string& message)
    : std::runtime_error(step + ": " + message), step_(std::move(step)) {}

std::string files::SeedReport(std::uint64_t seed) {
  return "report_seed" + std::to_string(seed) + ".json";
}

std::vector<WaferMap> LoadDataset(const ExperimentConfig& config) {
  std::vector<WaferMap> maps;
  if (config.data.source == "jsonl") {
    maps = Ingest(config.data.path);
  } else {
    SyntheticDatasetOptions options;
    options.num_maps = config.data.num_maps;
    options.generator.size = config.data.grid_size;
    options.generator.noise_rate = config.data.noise_rate;
    options.class_weights = config.data.class_weights;
    options.seed = config.data.seed;
    maps = GenerateDataset(options);
  }
  RequireArg(!maps.empty(), "dataset is empty");
  for (const WaferMap& m : maps) {
    RequireArg(m.rows() == maps.front().rows() && m.cols() == maps.front().cols(),
               "all maps in a dataset must share one grid shape");
  }
  return maps;
}

DatasetSplit PrepareSplit(const ExperimentConfig& config,
                          std::span<const WaferMap> data, std::uint64_t seed) {
  DatasetSplit split =
      Split(data, config.data.split, DeriveSeed(seed, "split"));
  if (config.data.balance_target > 0) {
    split.labeled = Balance(split.labeled, config.data.balance_target,
                            DeriveSeed(seed, "balance"));
  }
  return split;
}

std::vector<WaferMap> VaeTrainingMaps(const DatasetSplit& split) {
  std::vector<WaferMap> maps = split.labeled;
  maps.insert(maps.end(), split.unlabeled.maps().begin(),
              split.unlabeled.maps().end());
  return maps;
}

VaeConfig MakeVaeConfig(const ExperimentConfig& config, std::size_t rows,
                        std::size_t cols) {
  VaeConfig v;
  v.input_rows = rows;
  v.input_cols = cols;
  v.latent_dim = config.vae.latent_dim;
  v.channels = config.vae.channels;
  return v;
}

VaeTrainConfig MakeVaeTrainConfig(const ExperimentConfig& config,
                                  std::uint64_t seed) {
  VaeTrainConfig t;
  t.epochs = config.vae.epochs;
  t.batch_size = config.vae.batch_size;
  t.adam.lr = config.vae.lr;
  t.adam.beta1 = config.train.beta1;
  t.adam.beta2 = config.train.beta2;
  t.adam.epsilon = config.train.epsilon;
  t.kl_weight = config.vae.kl_weight;
  t.recenter_latents = config.vae.recenter_latents;
  t.seed = DeriveSeed(seed, "vae");
  return t;
}

PipelineConfig MakePipelineConfig(const ExperimentConfig& config,
                                  std::size_t rows, std::size_t cols,
                                  std::uint64_t seed) {
  NetworkConfig net;
  net.input_rows = rows;
  net.input_cols = cols;
  net.stem_channels = config.network.stem_channels;
  net.block_counts = config.network.block_counts;
  net.widths = config.network.widths;
  net.expansion = config.network.expansion;
  net.fusion_point = config.network.fusion_point;
  net.latent_dim = config.vae.latent_dim;

  TrainConfig train;
  train.batch_size = config.train.batch_size;
  train.adam.lr = config.train.lr;
  train.adam.beta1 = config.train.beta1;
  train.adam.beta2 = config.train.beta2;
  train.adam.epsilon = config.train.epsilon;

  PipelineConfig p;
  p.confidence_threshold = config.semisup.confidence_threshold;
  p.top_k = config.semisup.top_k;
  p.teacher_network = net;
  p.student_network = net;
  p.teacher_train = train;
  p.teacher_train.epochs = config.train.teacher_epochs;
  p.student_train = train;
  p.student_train.epochs = config.train.student_epochs;
  p.fine_tune_epochs = config.semisup.fine_tune_epochs;
  p.fine_tune_lr_divisor = config.semisup.fine_tune_lr_divisor;
  p.seed = seed;
  return p;
}

SeedOutcome RunSeed(const ExperimentConfig& config,
                    std::span<const WaferMap> data, std::uint64_t seed,
                    std::ostream* log) {
  RequireArg(!data.empty(), "dataset is empty");
  const std::size_t rows = data.front().rows();
  const std::size_t cols = data.front().cols();
  const std::string tag = "[seed " + std::to_string(seed) + "] ";
  const PipelineConfig pipeline = MakePipelineConfig(config, rows, cols, seed);
  RunStep("config", [&] { ValidatePipelineConfig(pipeline); });

  const DatasetSplit split =
      RunStep("split", [&] { return PrepareSplit(config, data, seed); });
  Log(log, tag + "split " + std::to_string(split.labeled.size()) + "/" +
               std::to_string(split.unlabeled.size()) + "/" +
               std::to_string(split.test.size()));

  Json report;
  report["seed"] = seed;
  report["data"] = SplitSummary(split);

  std::optional<Vae> vae;
  if (config.network.fusion_point != FusionPoint::kNone) {
    VaeTrainResult trained = RunStep("pretrain-vae", [&] {
      const auto maps = VaeTrainingMaps(split);
      return PretrainVae(maps, MakeVaeConfig(config, rows, cols),
                         MakeVaeTrainConfig(config, seed));
    });
    Json v;
    v["history"] = VaeHistoryToJson(trained.history);
    v["test_reconstruction_accuracy"] =
        ReconstructionAccuracy(trained.model, split.test);
    report["vae"] = std::move(v);
    vae.emplace(std::move(trained.model));
    Log(log, tag + "vae pretrained, final loss " +
                 Fixed(trained.history.back().loss));
  }
  const Vae* vae_ptr = vae ? &*vae : nullptr;

  TrainHistory teacher_history;
  ResidualClassifier teacher = RunStep("train-teacher", [&] {
    return TrainTeacher(pipeline, split.labeled, vae_ptr, &teacher_history);
  });
  Log(log, tag + "teacher trained");

  std::vector<PseudoLabel> scored, selected;
  RunStep("pseudo-label", [&] {
    scored = ScoreUnlabeled(teacher, vae_ptr, split.unlabeled);
    selected = SelectTopK(scored, pipeline.top_k, pipeline.confidence_threshold);
  });
  Log(log, tag + "selected " + std::to_string(selected.size()) + " of " +
               std::to_string(scored.size()) + " pseudo-labels");

  StudentOutcome student = RunStep("train-student", [&] {
    return TrainStudentPhase(pipeline, split.labeled, selected,
                             split.unlabeled, vae_ptr);
  });
  Log(log, tag + "student trained and fine-tuned");

  SeedOutcome out;
  out.seed = seed;
  RunStep("evaluate", [&] {
    out.teacher = Evaluate(teacher, vae_ptr, split.test);
    out.student = Evaluate(student.student, vae_ptr, split.test);
    out.pseudo = ScorePseudoLabels(scored, selected, split.unlabeled);
  });
  out.selected = selected.size();
  Log(log, tag + "teacher macro-F1 " + Fixed(out.teacher.macro_f1) +
               ", student macro-F1 " + Fixed(out.student.macro_f1));

  report["teacher"] = MetricsToJson(out.teacher);
  report["student"] = MetricsToJson(out.student);
  report["pseudo_labels"] =
      PseudoLabelStatsToJson(out.pseudo, scored.size(), selected.size());
  Json history;
  history["teacher"] = TrainHistoryToJson(teacher_history);
  history["student"] = TrainHistoryToJson(student.training);
  history["fine_tune"] = TrainHistoryToJson(student.fine_tune);
  report["history"] = std::move(history);
  report["pipeline"] = PipelineConfigToJson(pipeline);
  report["experiment"] = ExperimentConfigToJson(config);
  out.report = std::move(report);
  return out;
}

Json SummarizeSeeds(const ExperimentConfig& config,
                    std::span<const SeedOutcome> runs) {
  std::vector<const MetricsReport*> teacher, student;
  std::vector<double> pl_selected, pl_all, selected;
  std::vector<std::uint64_t> seeds;
  for (const SeedOutcome& r : runs) {
    seeds.push_back(r.seed);
    teacher.push_back(&r.teacher);
    student.push_back(&r.student);
    pl_selected.push_back(r.pseudo.accuracy_selected);
    pl_all.push_back(r.pseudo.accuracy_all);
    selected.push_back(static_cast<double>(r.selected));
  }
  Json j;
  j["seeds"] = seeds;
  j["teacher"] = MetricStats(teacher);
  j["student"] = MetricStats(student);
  Json pl;
  pl["selected"] = StatToJson(selected);
  pl["accuracy_selected"] = StatToJson(pl_selected);
  pl["accuracy_all"] = StatToJson(pl_all);
  j["pseudo_labels"] = std::move(pl);
  j["experiment"] = ExperimentConfigToJson(config);
  return j;
}

void CmdGenerate(const ExperimentConfig& config, std::ostream* log) {
  ValidateExperimentConfig(config);
  const auto maps = RunStep("generate", [&] { return LoadDataset(config); });
  RunStep("write", [&] {
    std::filesystem::create_directories(config.output_dir);
    WriteJsonl(config.output_dir / files::kDataset, maps);
    Json stats;
    stats["num_maps"] = maps.size();
    stats["rows"] = maps.front().rows();
    stats["cols"] = maps.front().cols();
    Json counts = Json::object();
    const auto hist = CountClasses(maps);
    for (int c = 0; c < kNumClasses; ++c) {
      counts[std::string(PatternName(c))] = hist[static_cast<std::size_t>(c)];
    }
    stats["class_counts"] = std::move(counts);
    stats["experiment"] = ExperimentConfigToJson(config);
    WriteJson(config.output_dir / files::kStats, stats);
  });
  Log(log, "wrote " + std::to_string(maps.size()) + " maps to " +
               (config.output_dir / files::kDataset).string());
}

void CmdPretrainVae(const ExperimentConfig& config, std::ostream* log) {
  Prepared p = Prepare(config);
  VaeTrainResult trained = RunStep("pretrain-vae", [&] {
    const auto maps = VaeTrainingMaps(p.split);
    return PretrainVae(maps, MakeVaeConfig(config, p.rows, p.cols),
                       MakeVaeTrainConfig(config, p.seed));
  });
  RunStep("write", [&] {
    Checkpoint checkpoint = SaveVae(trained.model);
    checkpoint.header["seed"] = p.seed;
    WriteTextFile(config.output_dir / files::kVae, SerializeCheckpoint(checkpoint));
    Json report;
    report["seed"] = p.seed;
    report["history"] = VaeHistoryToJson(trained.history);
    report["test_reconstruction_accuracy"] =
        ReconstructionAccuracy(trained.model, p.split.test);
    report["experiment"] = ExperimentConfigToJson(config);
    WriteJson(config.output_dir / files::kVaeReport, report);
  });
  Log(log, "vae written to " + (config.output_dir / files::kVae).string());
}

void CmdTrainTeacher(const ExperimentConfig& config, std::ostream* log) {
  Prepared p = Prepare(config);
  const auto vae = RunStep("load-vae", [&] { return LoadStepVae(config, p.seed); });
  const PipelineConfig pipeline = MakePipelineConfig(config, p.rows, p.cols, p.seed);
  TrainHistory history;
  ResidualClassifier teacher = RunStep("train-teacher", [&] {
    return TrainTeacher(pipeline, p.split.labeled, vae ? &*vae : nullptr,
                        &history);
  });
  RunStep("write", [&] {
    Checkpoint checkpoint = SaveClassifier(teacher);
    checkpoint.header["seed"] = p.seed;
    WriteTextFile(config.output_dir / files::kTeacher, SerializeCheckpoint(checkpoint));
    Json report;
    report["seed"] = p.seed;
    report["history"] = TrainHistoryToJson(history);
    report["experiment"] = ExperimentConfigToJson(config);
    WriteJson(config.output_dir / files::kTeacherReport, report);
  });
  Log(log, "teacher written to " + (config.output_dir / files::kTeacher).string());
}

void CmdPseudoLabel(const ExperimentConfig& config, std::ostream* log) {
  Prepared p = Prepare(config);
  const auto vae = RunStep("load-vae", [&] { return LoadStepVae(config, p.seed); });
  const ResidualClassifier teacher = RunStep("load-teacher", [&] {
    return LoadClassifier(
        LoadStepCheckpoint(config.output_dir / files::kTeacher, p.seed));
  });
  std::vector<PseudoLabel> scored, selected;
  RunStep("pseudo-label", [&] {
    scored = ScoreUnlabeled(teacher, vae ? &*vae : nullptr, p.split.unlabeled);
    selected = SelectTopK(scored, config.semisup.top_k,
                          config.semisup.confidence_threshold);
  });
  RunStep("write", [&] {
    Json j;
    j["seed"] = p.seed;
    j["confidence_threshold"] = config.semisup.confidence_threshold;
    j["top_k"] = config.semisup.top_k;
    j["scored"] = PseudoLabelsToJson(scored);
    j["selected"] = PseudoLabelsToJson(selected);
    j["experiment"] = ExperimentConfigToJson(config);
    WriteJson(config.output_dir / files::kPseudoLabels, j);
  });
  Log(log, "selected " + std::to_string(selected.size()) + " of " +
               std::to_string(scored.size()) + " unlabeled maps");
}

namespace {

struct StoredPseudoLabels {
  std::vector<PseudoLabel> scored;
  std::vector<PseudoLabel> selected;
};

StoredPseudoLabels LoadStepPseudoLabels(const ExperimentConfig& config,
                                        std::uint64_t seed) {
  const auto path = config.output_dir / files::kPseudoLabels;
  const Json j = ReadJson(path);
  if (j.value("seed", std::uint64_t{0}) != seed) {
    throw std::runtime_error(path.string() + " was written for another seed");
  }
  return {PseudoLabelsFromJson(j.at("scored")),
          PseudoLabelsFromJson(j.at("selected"))};
}

}  // namespace

void CmdTrainStudent(const ExperimentConfig& config, std::ostream* log) {
  Prepared p = Prepare(config);
  const auto vae = RunStep("load-vae", [&] { return LoadStepVae(config, p.seed); });
  const auto pseudo = RunStep("load-pseudo-labels",
                              [&] { return LoadStepPseudoLabels(config, p.seed); });
  const PipelineConfig pipeline = MakePipelineConfig(config, p.rows, p.cols, p.seed);
  StudentOutcome student = RunStep("train-student", [&] {
    return TrainStudentPhase(pipeline, p.split.labeled, pseudo.selected,
                             p.split.unlabeled, vae ? &*vae : nullptr);
  });
  RunStep("write", [&] {
    Checkpoint checkpoint = SaveClassifier(student.student);
    checkpoint.header["seed"] = p.seed;
    WriteTextFile(config.output_dir / files::kStudent, SerializeCheckpoint(checkpoint));
    Json report;
    report["seed"] = p.seed;
    report["student_set"] = p.split.labeled.size() + pseudo.selected.size();
    report["history"] = TrainHistoryToJson(student.training);
    report["fine_tune"] = TrainHistoryToJson(student.fine_tune);
    report["experiment"] = ExperimentConfigToJson(config);
    WriteJson(config.output_dir / files::kStudentReport, report);
  });
  Log(log, "student written to " + (config.output_dir / files::kStudent).string());
}

void CmdEvaluate(const ExperimentConfig& config, std::ostream* log) {
  Prepared p = Prepare(config);
  const auto vae = RunStep("load-vae", [&] { return LoadStepVae(config, p.seed); });
  const Vae* vae_ptr = vae ? &*vae : nullptr;
  const auto pseudo = RunStep("load-pseudo-labels",
                              [&] { return LoadStepPseudoLabels(config, p.seed); });
  Json report;
  std::string table;
  RunStep("evaluate", [&] {
    const ResidualClassifier teacher = LoadClassifier(
        LoadStepCheckpoint(config.output_dir / files::kTeacher, p.seed));
    const ResidualClassifier student = LoadClassifier(
        LoadStepCheckpoint(config.output_dir / files::kStudent, p.seed));
    const MetricsReport t = Evaluate(teacher, vae_ptr, p.split.test);
    const MetricsReport s = Evaluate(student, vae_ptr, p.split.test);
    const PseudoLabelStats stats =
        ScorePseudoLabels(pseudo.scored, pseudo.selected, p.split.unlabeled);
    report["seed"] = p.seed;
    report["teacher"] = MetricsToJson(t);
    report["student"] = MetricsToJson(s);
    report["pseudo_labels"] = PseudoLabelStatsToJson(
        stats, pseudo.scored.size(), pseudo.selected.size());
    report["experiment"] = ExperimentConfigToJson(config);
    table = "teacher\n" + RenderMetricsTable(t) + "\nstudent\n" +
            RenderMetricsTable(s);
  });
  RunStep("write", [&] {
    WriteJson(config.output_dir / files::kEvaluation, report);
    WriteTextFile(config.output_dir / files::kEvaluationTable, table);
  });
  Log(log, "evaluation written to " +
               (config.output_dir / files::kEvaluation).string());
}

Json CmdRun(const ExperimentConfig& config, std::ostream* log) {
  ValidateExperimentConfig(config);
  const auto data = RunStep("load-data", [&] { return LoadDataset(config); });
  std::vector<SeedOutcome> runs;
  for (std::uint64_t seed : config.seeds) {
    runs.push_back(RunSeed(config, data, seed, log));
    RunStep("write", [&] {
      WriteJson(config.output_dir / files::SeedReport(seed), runs.back().report);
    });
  }
  Json summary = SummarizeSeeds(config, runs);
  RunStep("write", [&] {
    WriteJson(config.output_dir / files::kSummary, summary);
    WriteTextFile(config.output_dir / files::kSummaryTable,
                  RenderSummary(summary));
  });
  return summary;
}

Json CmdAblate(const ExperimentConfig& config, std::ostream* log) {
  ValidateExperimentConfig(config);
  RunStep("ablate", [&] {
    RequireArg(config.ablate_fusion_points.size() >= 2,
               "ablate needs at least two fusion points");
  });
  Json rows = Json::array();
  std::ostringstream csv, txt;
  csv << "fusion_point,P,R,F1,A\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-14s %-18s %-18s %-18s %-18s\n",
                "fusion_point", "P", "R", "F1", "A");
  txt << line;
  for (FusionPoint point : config.ablate_fusion_points) {
    ExperimentConfig run = config;
    run.network.fusion_point = point;
    const std::string name(FusionPointName(point));
    run.output_dir = config.output_dir / name;
    Log(log, "ablate: fusion point " + name);
    const Json summary = CmdRun(run, log);
    const Json& s = summary.at("student");
    auto mean = [&s](const char* key) { return s.at(key).at("mean").get<double>(); };
    auto cell = [&s](const char* key) {
      return Fixed(s.at(key).at("mean").get<double>()) + " +- " +
             Fixed(s.at(key).at("std").get<double>());
    };
    Json row;
    row["fusion_point"] = name;
    row["P"] = s.at("macro_precision");
    row["R"] = s.at("macro_recall");
    row["F1"] = s.at("macro_f1");
    row["A"] = s.at("accuracy");
    row["seeds"] = summary.at("seeds");
    row["data"] = summary.at("experiment").at("data");
    rows.push_back(std::move(row));
    csv << name << ',' << Fixed(mean("macro_precision"), 6) << ','
        << Fixed(mean("macro_recall"), 6) << ',' << Fixed(mean("macro_f1"), 6)
        << ',' << Fixed(mean("accuracy"), 6) << '\n';
    std::snprintf(line, sizeof(line), "%-14s %-18s %-18s %-18s %-18s\n",
                  name.c_str(), cell("macro_precision").c_str(),
                  cell("macro_recall").c_str(), cell("macro_f1").c_str(),
                  cell("accuracy").c_str());
    txt << line;
  }
  Json table;
  table["rows"] = std::move(rows);
  table["experiment"] = ExperimentConfigToJson(config);
  RunStep("write", [&] {
    WriteJson(config.output_dir / files::kAblationJson, table);
    WriteTextFile(config.output_dir / files::kAblationCsv, csv.str());
    WriteTextFile(config.output_dir / files::kAblationTable, txt.str());
  });
  return table;
}

}  // namespace wafersemi
