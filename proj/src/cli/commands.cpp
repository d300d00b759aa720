#include "ilioseg/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ilioseg/cohortstats.hpp"
#include "ilioseg/csv.hpp"
#include "ilioseg/mvol.hpp"
#include "ilioseg/svg.hpp"

namespace ilio::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ArgumentError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const FormatError&) {
    throw ArgumentError(key + ": expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ArgumentError(key + ": expected true or false, got '" + v + "'");
}

std::array<std::size_t, 3> parse_dims(const std::string& key, const std::string& v) {
  std::array<std::size_t, 3> d{};
  std::stringstream ss(v);
  std::string part;
  int i = 0;
  while (std::getline(ss, part, 'x')) {
    if (i == 3) break;
    d[i++] = static_cast<std::size_t>(parse_u64(key, trim(part)));
  }
  if (i != 3 || std::getline(ss, part, 'x')) throw ArgumentError(key + ": expected AxBxC, got '" + v + "'");
  return d;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw ArgumentError("missing " + what + ": " + p.string());
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_file_atomic(p, text);
}

void log(const std::string& msg) { std::cerr << msg << "\n"; }

struct LandmarkTable {
  std::vector<std::string> ids;
  std::vector<LandmarkPair> pairs;
};

LandmarkTable read_landmarks(const fs::path& p) {
  require_file(p, "landmarks");
  const CsvTable t = read_csv(p);
  const std::size_t id = t.require_column("id");
  const char* names[6] = {"right_x", "right_y", "right_z", "left_x", "left_y", "left_z"};
  std::size_t c[6];
  for (int i = 0; i < 6; ++i) c[i] = t.require_column(names[i]);
  LandmarkTable out;
  for (const auto& row : t.rows) {
    auto v = [&](int i) { return static_cast<long>(parse_double(row[c[i]])); };
    out.ids.push_back(row[id]);
    out.pairs.push_back({{v(0), v(1), v(2)}, {v(3), v(4), v(5)}});
  }
  return out;
}

std::vector<SubjectRecord> load_cohort(const RunConfig& cfg) {
  require_file(cfg.cohort_path(), "cohort");
  auto cohort = read_cohort_csv(cfg.cohort_path());
  if (cohort.empty()) throw ArgumentError("cohort is empty: " + cfg.cohort_path().string());
  return cohort;
}

SubjectVolumes load_subject(const RunConfig& cfg, const SubjectRecord& rec,
                            const LandmarkTable& lm, bool need_mask) {
  const auto it = std::find(lm.ids.begin(), lm.ids.end(), rec.id);
  if (it == lm.ids.end()) throw ArgumentError("no landmarks for subject " + rec.id);
  SubjectVolumes s;
  s.id = rec.id;
  s.landmarks = lm.pairs[static_cast<std::size_t>(it - lm.ids.begin())];
  require_file(cfg.image_path(rec.id), "image");
  s.image = read_volume(cfg.image_path(rec.id));
  if (need_mask) {
    require_file(cfg.mask_path(rec.id), "ground-truth mask");
    s.mask = read_mask(cfg.mask_path(rec.id));
  }
  return s;
}

std::size_t train_split(const RunConfig& cfg, std::size_t n) {
  return std::min(cfg.train_count, n);
}

VNet<float> load_model(const RunConfig& cfg) {
  require_file(cfg.checkpoint_path(), "checkpoint");
  auto model = load_checkpoint<float>(cfg.checkpoint_path());
  if (model.spec().input_dims != cfg.train.crop.dims) {
    throw ArgumentError("checkpoint input dims do not match the configured crop");
  }
  return model;
}

std::string fmt(double v) { return format_double(v); }

}  // namespace

// --- configuration ----------------------------------------------------------

RunConfig RunConfig::for_scale(const std::string& scale) {
  RunConfig c;
  if (scale == "desk") {
    c.scale = "desk";
  } else if (scale == "paper") {
    c.scale = "paper";
    c.n = 110;
    c.train_count = 90;
    c.train = TrainConfig::paper();
  } else {
    throw ArgumentError("scale must be desk or paper, got '" + scale + "'");
  }
  c.train.seed = c.seed;
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "workdir") {
    workdir = value;
  } else if (key == "scale") {
    if (value != scale) throw ArgumentError("scale can only be chosen before other settings");
  } else if (key == "seed") {
    seed = parse_u64(key, value);
    train.seed = seed;
  } else if (key == "n") {
    n = parse_u64(key, value);
  } else if (key == "train_count") {
    train_count = parse_u64(key, value);
  } else if (key == "symmetric") {
    symmetric = parse_bool(key, value);
  } else if (key == "epochs") {
    train.epochs = static_cast<int>(parse_u64(key, value));
  } else if (key == "batch_size") {
    train.batch_size = parse_u64(key, value);
  } else if (key == "lr") {
    train.lr = parse_real(key, value);
  } else if (key == "aug_count") {
    train.aug_count = static_cast<int>(parse_u64(key, value));
  } else if (key == "width") {
    train.arch.width = parse_real(key, value);
  } else if (key == "crop") {
    train.crop.dims = parse_dims(key, value);
    train.arch.input_dims = train.crop.dims;
  } else if (key == "validate_each_epoch") {
    validate_each_epoch = parse_bool(key, value);
  } else if (key == "largest_component") {
    largest_component = parse_bool(key, value);
  } else if (key == "stats_volumes") {
    if (value != "predicted" && value != "true") {
      throw ArgumentError("stats_volumes must be predicted or true");
    }
    stats_volumes = value;
  } else if (key == "gam_knots") {
    gam_knots = static_cast<int>(parse_u64(key, value));
  } else if (key == "cohort_csv") {
    cohort_csv = value;
  } else if (key == "checkpoint") {
    checkpoint = value;
  } else if (key == "segmented_csv") {
    segmented_csv = value;
  } else {
    throw ArgumentError("unknown setting '" + key + "'");
  }
}

void RunConfig::validate() const {
  if (n < 1) throw ArgumentError("n must be at least 1");
  if (gam_knots < 2) throw ArgumentError("gam_knots must be at least 2");
  train.validate();
}

PhantomGeometry RunConfig::geometry() const {
  return scale == "paper" ? PhantomGeometry::paper() : PhantomGeometry::desk();
}

fs::path RunConfig::cohort_path() const { return cohort_csv.empty() ? workdir / "cohort.csv" : cohort_csv; }
fs::path RunConfig::checkpoint_path() const { return checkpoint.empty() ? workdir / "model.ckpt" : checkpoint; }
fs::path RunConfig::segmented_path() const {
  return segmented_csv.empty() ? workdir / "segmented.csv" : segmented_csv;
}
fs::path RunConfig::image_path(const std::string& id) const { return workdir / "images" / (id + "_image.mvol"); }
fs::path RunConfig::mask_path(const std::string& id) const { return workdir / "masks" / (id + "_mask.mvol"); }
fs::path RunConfig::prediction_path(const std::string& id) const {
  return workdir / "predictions" / (id + "_pred.mvol");
}
fs::path RunConfig::landmarks_path() const { return workdir / "landmarks.csv"; }
fs::path RunConfig::history_path() const { return workdir / "history.csv"; }
fs::path RunConfig::dsc_path() const { return workdir / "dsc.csv"; }
fs::path RunConfig::stats_dir() const { return workdir / "stats"; }

KeyValues parse_config_text(const std::string& text) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
      throw ArgumentError("config line " + std::to_string(number) + ": expected key = value");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

RunConfig resolve_config(const fs::path& config_file, const KeyValues& overrides) {
  KeyValues file;
  if (!config_file.empty()) {
    std::ifstream f(config_file);
    if (!f) throw ArgumentError("cannot read config " + config_file.string());
    std::stringstream ss;
    ss << f.rdbuf();
    file = parse_config_text(ss.str());
  }
  std::string scale = "desk";
  for (const auto& [k, v] : file) {
    if (k == "scale") scale = v;
  }
  for (const auto& [k, v] : overrides) {
    if (k == "scale") scale = v;
  }
  RunConfig cfg = RunConfig::for_scale(scale);
  for (const auto& [k, v] : file) {
    if (k != "scale") cfg.set(k, v);
  }
  for (const auto& [k, v] : overrides) {
    if (k != "scale") cfg.set(k, v);
  }
  return cfg;
}

std::uint64_t image_seed(std::uint64_t seed, std::size_t index) {
  return derive_seed(seed, {0x494d414745ULL, index});
}

// --- commands ---------------------------------------------------------------

int cmd_cohort_gen(const RunConfig& cfg) {
  cfg.validate();
  const auto cohort = sample_cohort(CohortSpec::calibrated(cfg.n, cfg.seed));
  const PhantomGeometry geometry = cfg.geometry();
  geometry.validate();

  std::vector<LandmarkPair> landmarks(cohort.size());
  std::vector<std::exception_ptr> errors(cohort.size());
  fs::create_directories(cfg.workdir / "images");
  fs::create_directories(cfg.workdir / "masks");
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    try {
      const auto s = synthesize_subject(cohort[i], geometry, image_seed(cfg.seed, i), cfg.symmetric);
      write_mvol(s.image, cfg.image_path(cohort[i].id));
      write_mvol(s.mask, cfg.mask_path(cohort[i].id));
      landmarks[i] = s.landmarks;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  CsvTable lm;
  lm.header = {"id", "right_x", "right_y", "right_z", "left_x", "left_y", "left_z"};
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& p = landmarks[i];
    lm.rows.push_back({cohort[i].id, std::to_string(p.right.x), std::to_string(p.right.y),
                       std::to_string(p.right.z), std::to_string(p.left.x), std::to_string(p.left.y),
                       std::to_string(p.left.z)});
  }
  write_csv(lm, cfg.landmarks_path());
  write_cohort_csv(cohort, cfg.cohort_path());
  log("cohort-gen: wrote " + std::to_string(cohort.size()) + " subjects to " + cfg.workdir.string());
  return kExitOk;
}

int cmd_train(const RunConfig& cfg) {
  cfg.validate();
  const auto cohort = load_cohort(cfg);
  const auto lm = read_landmarks(cfg.landmarks_path());
  const std::size_t split = train_split(cfg, cohort.size());
  if (split == 0) throw ArgumentError("train_count must be at least 1");

  std::vector<SubjectVolumes> train_subjects, held_out;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    if (i < split) {
      train_subjects.push_back(load_subject(cfg, cohort[i], lm, true));
    } else if (cfg.validate_each_epoch) {
      held_out.push_back(load_subject(cfg, cohort[i], lm, true));
    }
  }
  const auto samples = build_training_set(train_subjects, cfg.train.crop, cfg.train.aug_count, cfg.seed);
  log("train: " + std::to_string(samples.size()) + " samples from " +
      std::to_string(train_subjects.size()) + " subjects");

  TrainOptions opts;
  if (!held_out.empty()) opts.validation = &held_out;
  opts.on_epoch = [](const EpochReport& r) {
    std::ostringstream os;
    os << "epoch " << r.epoch << " loss " << r.loss;
    if (r.val_dsc >= 0.0) os << " val_dsc " << r.val_dsc;
    log(os.str());
  };
  const auto result = train(cfg.train, samples, opts);

  CsvTable hist;
  hist.header = {"epoch", "loss", "val_dsc"};
  for (std::size_t e = 0; e < result.history.loss.size(); ++e) {
    hist.rows.push_back({std::to_string(e + 1), fmt(result.history.loss[e]),
                         e < result.history.val_dsc.size() ? fmt(result.history.val_dsc[e]) : ""});
  }
  if (cfg.checkpoint_path().has_parent_path()) fs::create_directories(cfg.checkpoint_path().parent_path());
  save_checkpoint(result.model, cfg.checkpoint_path());
  write_csv(hist, cfg.history_path());
  log("train: wrote " + cfg.checkpoint_path().string());
  return kExitOk;
}

int cmd_segment(const RunConfig& cfg) {
  cfg.validate();
  require_file(cfg.cohort_path(), "cohort");
  CsvTable table = read_csv(cfg.cohort_path());
  const auto cohort = load_cohort(cfg);
  const auto lm = read_landmarks(cfg.landmarks_path());
  const auto model = load_model(cfg);

  for (const char* col : {"predicted_left_ml", "predicted_right_ml"}) {
    if (table.column(col)) throw ArgumentError(std::string("cohort already has column ") + col);
  }
  table.header.push_back("predicted_left_ml");
  table.header.push_back("predicted_right_ml");
  fs::create_directories(cfg.workdir / "predictions");
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto s = load_subject(cfg, cohort[i], lm, false);
    const auto seg = segment_subject(model, s.image, s.landmarks, cfg.train.crop, cfg.largest_component);
    write_mvol(seg.mask, cfg.prediction_path(s.id));
    table.rows[i].push_back(fmt(seg.left_ml));
    table.rows[i].push_back(fmt(seg.right_ml));
  }
  write_csv(table, cfg.segmented_path());
  log("segment: wrote " + cfg.segmented_path().string());
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg) {
  cfg.validate();
  const auto cohort = load_cohort(cfg);
  const auto lm = read_landmarks(cfg.landmarks_path());
  const std::size_t split = train_split(cfg, cohort.size());
  if (split >= cohort.size()) throw ArgumentError("no held-out subjects to evaluate");
  std::vector<SubjectVolumes> held_out;
  for (std::size_t i = split; i < cohort.size(); ++i) {
    held_out.push_back(load_subject(cfg, cohort[i], lm, true));
  }
  const auto model = load_model(cfg);
  const auto scores = evaluate_dsc(model, held_out, cfg.train.crop);

  CsvTable t;
  t.header = {"id", "dsc"};
  for (std::size_t i = 0; i < held_out.size(); ++i) t.rows.push_back({held_out[i].id, fmt(scores[i])});
  const Summary s = summarize(scores);
  t.rows.push_back({"mean", fmt(s.mean)});
  t.rows.push_back({"sd", s.sd ? fmt(*s.sd) : "NA"});
  t.rows.push_back({"min", fmt(s.min)});
  t.rows.push_back({"max", fmt(s.max)});
  write_csv(t, cfg.dsc_path());
  std::ostringstream os;
  os << "eval: mean DSC " << s.mean << " over " << scores.size() << " subjects";
  log(os.str());
  return kExitOk;
}

namespace {

const char* kFemaleColor = "#c0392b";
const char* kMaleColor = "#2471a3";

svg::Series scatter(const std::vector<CohortRow>& rows, Sex sex, double (*fx)(const CohortRow&),
                    double (*fy)(const CohortRow&)) {
  svg::Series s;
  s.color = sex == Sex::male ? kMaleColor : kFemaleColor;
  s.label = sex_name(sex);
  for (const auto& r : rows) {
    if (r.subject.sex != sex) continue;
    s.x.push_back(fx(r));
    s.y.push_back(fy(r));
  }
  return s;
}

void add_summary_rows(CsvTable& t, const std::string& group,
                      const std::vector<std::pair<std::string, Summary>>& sums,
                      const std::vector<std::string>& measures) {
  for (const auto& [m, s] : sums) {
    if (std::find(measures.begin(), measures.end(), m) == measures.end()) continue;
    t.rows.push_back({group, m, std::to_string(s.n), fmt(s.mean), s.sd ? fmt(*s.sd) : "NA",
                      fmt(s.min), fmt(s.max)});
  }
}

std::vector<std::string> test_row(const std::string& group, const NamedTest& t) {
  return {group, t.name, fmt(t.result.statistic), fmt(t.result.df), fmt(t.result.p),
          format_p(t.result.p), fmt(t.result.estimate)};
}

}  // namespace

int cmd_stats(const RunConfig& cfg) {
  cfg.validate();
  require_file(cfg.segmented_path(), "segmented cohort");
  const CsvTable table = read_csv(cfg.segmented_path());
  const auto records = read_cohort_csv(cfg.segmented_path());
  const auto pred_left = table.numeric_column("predicted_left_ml");
  const auto pred_right = table.numeric_column("predicted_right_ml");

  std::vector<CohortRow> rows;
  std::vector<double> manual, automatic;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (cfg.stats_volumes == "true") {
      rows.push_back(CohortRow::make(r, r.true_left_ml, r.true_right_ml));
    } else {
      rows.push_back(CohortRow::make(r, pred_left[i], pred_right[i]));
    }
    manual.push_back(r.true_left_ml + r.true_right_ml);
    automatic.push_back(pred_left[i] + pred_right[i]);
  }
  if (rows.empty()) throw ArgumentError("segmented cohort has no rows");
  const StatsReport rep = cohort_summary(rows);
  const fs::path dir = cfg.stats_dir();
  fs::create_directories(dir);

  CsvTable demo, vols, tests;
  demo.header = vols.header = {"group", "measure", "n", "mean", "sd", "min", "max"};
  tests.header = {"group", "test", "statistic", "df", "p", "p_report", "estimate"};
  for (const auto& g : rep.groups) {
    add_summary_rows(demo, g.group, g.summaries, demographic_measures());
    add_summary_rows(vols, g.group, g.summaries, volume_measures());
    for (const auto& t : g.tests) tests.rows.push_back(test_row(g.group, t));
  }
  for (const auto& t : rep.between) tests.rows.push_back(test_row("male_vs_female", t));

  nlohmann::json index;
  index["tables"] = {"demographics.csv", "volumes.csv", "tests.csv"};
  index["plots"] = {"volume_vs_height.svg", "imi_vs_bmi.svg", "imi_vs_age.svg", "bland_altman.svg"};
  index["volumes"] = cfg.stats_volumes;
  index["n"] = rows.size();

  svg::Plot bap;
  bap.title = "Bland-Altman: predicted vs ground truth";
  bap.x_label = "mean of predicted and ground truth (ml)";
  bap.y_label = "predicted - ground truth (ml)";
  try {
    const auto ba = bland_altman(manual, automatic);
    svg::Series pts;
    pts.color = "#34495e";
    for (const auto& p : ba.points) {
      pts.x.push_back(p.mean);
      pts.y.push_back(p.diff);
    }
    bap.series.push_back(pts);
    bap.rules = {{ba.loa_high, "+1.96 SD"}, {ba.bias, "bias"}, {ba.loa_low, "-1.96 SD"}};
    index["bland_altman"] = {{"bias", ba.bias}, {"sd", ba.sd_diff}, {"loa_low", ba.loa_low},
                             {"loa_high", ba.loa_high}, {"pairs", ba.points.size()}};
  } catch (const ArgumentError&) {
    index["bland_altman"] = nullptr;
  }

  svg::Plot vh;
  vh.title = "Total volume by height";
  vh.x_label = "height (cm)";
  vh.y_label = "total volume (ml)";
  svg::Plot ib;
  ib.title = "IMI by BMI";
  ib.x_label = "BMI (kg/m^2)";
  ib.y_label = "IMI (ml/m^2)";
  svg::Plot ia;
  ia.title = "IMI by age";
  ia.x_label = "age (years)";
  ia.y_label = "IMI (ml/m^2)";
  nlohmann::json gam = nlohmann::json::object();
  for (Sex sex : {Sex::female, Sex::male}) {
    auto height = [](const CohortRow& r) { return r.subject.height_cm; };
    auto total = [](const CohortRow& r) { return r.total_ml; };
    auto bmi = [](const CohortRow& r) { return r.subject.bmi; };
    auto index_of = [](const CohortRow& r) { return r.imi; };
    auto age = [](const CohortRow& r) { return static_cast<double>(r.subject.age); };
    vh.series.push_back(scatter(rows, sex, height, total));
    ib.series.push_back(scatter(rows, sex, bmi, index_of));
    svg::Series pts = scatter(rows, sex, age, index_of);
    ia.series.push_back(pts);
    const int knots = std::min<int>(cfg.gam_knots, static_cast<int>(pts.x.size()) - 3);
    if (knots < 2) continue;
    try {
      const GamFit fit = gam_fit(pts.x, pts.y, knots);
      svg::Series curve;
      curve.line = true;
      curve.color = pts.color;
      const double lo = fit.knots.front(), hi = fit.knots.back();
      for (int k = 0; k <= 100; ++k) {
        const double x = lo + (hi - lo) * k / 100.0;
        curve.x.push_back(x);
        curve.y.push_back(fit(x));
      }
      ia.series.push_back(curve);
      gam[sex_name(sex)] = {{"lambda", fit.lambda}, {"edf", fit.edf}, {"knots", fit.knots.size()}};
    } catch (const ArgumentError&) {
    }
  }
  index["gam"] = gam;

  write_csv(demo, dir / "demographics.csv");
  write_csv(vols, dir / "volumes.csv");
  write_csv(tests, dir / "tests.csv");
  write_text(dir / "volume_vs_height.svg", vh.render());
  write_text(dir / "imi_vs_bmi.svg", ib.render());
  write_text(dir / "imi_vs_age.svg", ia.render());
  write_text(dir / "bland_altman.svg", bap.render());
  write_text(dir / "index.json", index.dump(2) + "\n");
  log("stats: wrote " + dir.string());
  return kExitOk;
}

int run_command(const std::string& name, const RunConfig& config) {
  try {
    if (name == "cohort-gen") return cmd_cohort_gen(config);
    if (name == "train") return cmd_train(config);
    if (name == "segment") return cmd_segment(config);
    if (name == "eval") return cmd_eval(config);
    if (name == "stats") return cmd_stats(config);
    log("unknown command " + name);
    return kExitInput;
  } catch (const NumericError& e) {
    log(name + ": numeric failure: " + e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    log(name + ": " + e.what());
    return kExitInput;
  }
}

}  // namespace ilio::cli
