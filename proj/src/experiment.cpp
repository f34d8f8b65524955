#include "advbench/experiment.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <ctime>
#include <map>
#include <sstream>

#include "advbench/binary_io.hpp"
#include "advbench/error.hpp"
#include "advbench/rng.hpp"

namespace advbench {

// ---- context ----------------------------------------------------------------

Context::Context(ExperimentConfig c, Dataset d, Mlp m) : cfg(std::move(c)), data(std::move(d)), model(std::move(m)) {
  if (model.input_dim() != data.d || model.output_dim() != data.k) {
    throw PipelineError("model shape " + std::to_string(model.input_dim()) + "->" + std::to_string(model.output_dim()) +
                        " does not match the dataset (d=" + std::to_string(data.d) + ", k=" + std::to_string(data.k) + ")");
  }
  train = data.indices(Split::train);
  test = data.indices(Split::test);
  const auto val = data.indices(Split::validation);
  const std::size_t n_fit = std::min(cfg.detector.fit_samples, val.size());
  fit.assign(val.begin(), val.begin() + static_cast<std::ptrdiff_t>(n_fit));
  calib.assign(val.begin() + static_cast<std::ptrdiff_t>(n_fit), val.end());
  if (calib.size() < 200) {
    throw InsufficientDataError("validation split leaves " + std::to_string(calib.size()) +
                                " calibration samples after the detector fitting pool; need >= 200");
  }
  if (fit.size() < 10) throw InsufficientDataError("detector fitting pool needs >= 10 validation samples");
  if (test.empty()) throw InsufficientDataError("empty test split");
}

Samples Context::samples(std::span<const std::size_t> idx) const {
  if (idx.empty()) throw InsufficientDataError("empty sample selection");
  Samples s{data.matrix(idx), {}, {}};
  for (std::size_t i : idx) {
    s.labels.push_back(data.labels[i]);
    s.ids.push_back(data.ids[i]);
  }
  return s;
}

std::vector<std::size_t> Context::attack_rows(std::size_t limit) const {
  const std::size_t n = limit == 0 ? test.size() : std::min(limit, test.size());
  return {test.begin(), test.begin() + static_cast<std::ptrdiff_t>(n)};
}

Dataset make_dataset(const ExperimentConfig& cfg) {
  const auto& ds = cfg.dataset;
  if (ds.source == "external") {
    if (!std::filesystem::exists(ds.path)) throw ConfigError("dataset file not found: " + ds.path.string());
    Dataset data = load_external(ds.path);
    assign_splits(data, ds.synth.ratios);
    return data;
  }
  return synth_dataset(ds.classes, ds.dim, ds.per_class, cfg.seed, ds.synth);
}

TrainResult run_train(const ExperimentConfig& cfg) {
  Dataset data = make_dataset(cfg);
  std::vector<std::size_t> sizes{data.d};
  sizes.insert(sizes.end(), cfg.model.hidden.begin(), cfg.model.hidden.end());
  sizes.push_back(data.k);
  Mlp model = Mlp::init(sizes, derive_seed(cfg.seed, "model/init"));
  TrainReport report = train(model, data, cfg.model.train);
  return {std::move(data), std::move(model), std::move(report)};
}

void require_split(const Dataset& data, std::span<const std::size_t> idx, Split allowed, const std::string& role) {
  for (std::size_t i : idx) {
    if (data.splits[i] != allowed) {
      throw PipelineError(role + ": sample " + std::to_string(data.ids[i]) + " is tagged " + split_name(data.splits[i]) +
                          ", only " + split_name(allowed) + " samples may be used here");
    }
  }
}

std::uint64_t epsilon_key(double epsilon) { return std::bit_cast<std::uint64_t>(epsilon); }

NoiseConfig benign_noise(const ExperimentConfig& cfg, double epsilon) {
  return {epsilon, cfg.noise.count, derive_seed(cfg.seed, "noise/benign", epsilon_key(epsilon))};
}

NoiseConfig adversarial_noise(const ExperimentConfig& cfg, double epsilon) {
  return {epsilon, cfg.noise.count, derive_seed(cfg.seed, "noise/adversarial", epsilon_key(epsilon))};
}

LogitProfile calibration_profiles(const Context& ctx, double epsilon) {
  require_split(ctx.data, ctx.calib, Split::validation, "logit profiles");
  const Samples s = ctx.samples(ctx.calib);
  return compute_profiles(ctx.model, s.x, s.ids, benign_noise(ctx.cfg, epsilon));
}

// ---- attacks ----------------------------------------------------------------

Samples AttackRun::adversarial(std::size_t d) const {
  std::vector<const AttackRecord*> ok;
  for (const auto& r : records) {
    if (r.target_hit()) ok.push_back(&r);
  }
  if (ok.empty()) throw PipelineError(std::string("attack ") + attack_name(kind) + " produced no successful adversarial examples");
  Samples s{Tensor({ok.size(), d}), {}, {}};
  for (std::size_t i = 0; i < ok.size(); ++i) {
    std::copy(ok[i]->x_adv.begin(), ok[i]->x_adv.end(), s.x.raw() + i * d);
    s.labels.push_back(ok[i]->label);
    s.ids.push_back(ok[i]->id);
  }
  return s;
}

AttackRun attack_rows(const Context& ctx, std::span<const std::size_t> rows, AttackKind kind, double epsilon,
                      const LogitProfile* profiles, const DetectorModel* detector, const std::string& purpose) {
  AttackConfig ac = ctx.cfg.attack.base;
  ac.noise_epsilon = epsilon;
  ac.seed = derive_seed(ac.seed, purpose + "/" + attack_name(kind), epsilon_key(epsilon));
  const Samples s = ctx.samples(rows);
  AttackRun run{kind, epsilon, {}};
  run.records = run_attack(ctx.model, s.x, s.labels, s.ids, AttackSetup{kind, profiles, detector}, ac);
  return run;
}

// ---- detectors --------------------------------------------------------------

FeatureSet benign_features(const Context& ctx, std::span<const std::size_t> rows, double epsilon) {
  const Samples s = ctx.samples(rows);
  return {feature_matrix(ctx.model, s.x, s.ids, benign_noise(ctx.cfg, epsilon)), s.labels, s.ids};
}

FeatureSet adversarial_features(const Context& ctx, const AttackRun& run) {
  const Samples s = run.adversarial(ctx.data.d);
  return {feature_matrix(ctx.model, s.x, s.ids, adversarial_noise(ctx.cfg, run.epsilon)), s.labels, s.ids};
}

void StatFit::set_fpr(double fpr_target) {
  detector.thresholds = calibrate_thresholds(calibration_scores, fpr_target, detector.stats.k);
}

StatFit fit_stat_test(const Context& ctx, double epsilon) {
  require_split(ctx.data, ctx.calib, Split::validation, "statistical-test calibration");
  const Samples s = ctx.samples(ctx.calib);
  const NoiseConfig noise = benign_noise(ctx.cfg, epsilon);
  StatFit fit;
  fit.detector.noise = noise;
  fit.detector.stats = benign_calibration(ctx.model, s.x, s.ids, noise);
  const Tensor f = feature_matrix(ctx.model, s.x, s.ids, noise);
  for (std::size_t r = 0; r < f.rows(); ++r) {
    fit.calibration_scores.push_back(max_score(stat_test_score_feature(f.row_span(r), fit.detector.stats)));
  }
  fit.set_fpr(ctx.cfg.fpr_targets.back());
  return fit;
}

void ClassifierFit::set_fpr(double fpr_target) { calibrate_detector_threshold(detector, calibration_features, fpr_target); }

ClassifierFit wrap_detector(const Context& ctx, DetectorModel det) {
  if (det.k() != ctx.data.k) throw PipelineError("detector checkpoint is for k=" + std::to_string(det.k()));
  require_split(ctx.data, ctx.calib, Split::validation, "detector threshold calibration");
  ClassifierFit fit{std::move(det), {}};
  fit.calibration_features = benign_features(ctx, ctx.calib, fit.detector.provenance().epsilon).features;
  return fit;
}

ClassifierFit fit_detector_on(const Context& ctx, double epsilon, const AttackRun& fit_attack) {
  require_split(ctx.data, ctx.fit, Split::validation, "detector training");
  require_split(ctx.data, ctx.calib, Split::validation, "detector threshold calibration");
  if (fit_attack.epsilon != epsilon) throw PipelineError("detector training: attack epsilon does not match");
  const FeatureSet benign = benign_features(ctx, ctx.fit, epsilon);
  const FeatureSet adv = adversarial_features(ctx, fit_attack);
  const FeatureSet calib = benign_features(ctx, ctx.calib, epsilon);
  DetectorHyper hyper = ctx.cfg.detector.hyper;
  hyper.fpr_target = ctx.cfg.fpr_targets.back();
  hyper.seed = derive_seed(hyper.seed, attack_name(fit_attack.kind), epsilon_key(epsilon));
  DetectorProvenance prov{attack_name(fit_attack.kind), epsilon, hyper.seed, 0, hyper.fpr_target};
  ClassifierFit fit{fit_detector(ctx.data.k, benign.features, adv.features, calib.features, hyper, prov), calib.features};
  return fit;
}

ClassifierFit fit_classifier(const Context& ctx, double epsilon) {
  const AttackRun cw = attack_rows(ctx, ctx.fit, AttackKind::cw, epsilon, nullptr, nullptr, "fit");
  return fit_detector_on(ctx, epsilon, cw);
}

std::vector<bool> flag_stat(const StatTestDetector& det, const FeatureSet& f) {
  std::vector<bool> out(f.features.rows());
  for (std::size_t r = 0; r < out.size(); ++r) {
    out[r] = stat_test_decide(stat_test_score_feature(f.features.row_span(r), det.stats), det.thresholds).verdict ==
             Verdict::adversarial;
  }
  return out;
}

std::vector<bool> flag_classifier(const DetectorModel& det, const FeatureSet& f) {
  const auto p = p_adversarial_all(det, f.features);
  std::vector<bool> out(p.size());
  for (std::size_t r = 0; r < p.size(); ++r) out[r] = p[r] >= det.threshold();
  return out;
}

double flag_rate(const std::vector<bool>& flags) {
  if (flags.empty()) return 0.0;
  return static_cast<double>(std::count(flags.begin(), flags.end(), true)) / static_cast<double>(flags.size());
}

void guard_evaluation_rows(const Context& ctx, std::span<const std::size_t> benign_rows) {
  for (std::size_t i : benign_rows) {
    if (std::binary_search(ctx.calib.begin(), ctx.calib.end(), i) || std::binary_search(ctx.fit.begin(), ctx.fit.end(), i)) {
      throw PipelineError("refusing to evaluate a detector on sample " + std::to_string(ctx.data.ids[i]) +
                          ", which belongs to its own calibration/fitting data");
    }
  }
  require_split(ctx.data, benign_rows, Split::test, "benign evaluation");
}

// ---- reference values -------------------------------------------------------

std::optional<double> reference_tpr(const std::string& detector, const std::string& attack, double epsilon,
                                    double fpr_target) {
  struct Key {
    const char* detector;
    const char* attack;
    double epsilon;
    double at1, at5;
  };
  // TPR (%) at FPR 1% / 5% reported for ResNet-56 on CIFAR-10.
  static const Key table[] = {
      {"stat", "cw", 0.01, 38.2, 55.4},         {"stat", "cw-noisy", 0.01, 29.0, 51.8},
      {"stat", "lma", 0.01, 0.1, 0.9},          {"stat", "cw", 0.1, 96.6, 99.9},
      {"stat", "cw-noisy", 0.1, 3.6, 48.8},     {"stat", "lma", 0.1, 0.3, 2.2},
      {"stat", "cw", 1.0, 96.1, 98.4},          {"stat", "cw-noisy", 1.0, 58.4, 69.2},
      {"stat", "lma", 1.0, 0.0, 0.0},           {"stat", "cw", 10.0, 96.9, 98.6},
      {"stat", "cw-noisy", 10.0, 77.6, 88.2},   {"stat", "lma", 10.0, 0.0, 0.0},
      {"classifier", "cw", 0.01, 97.8, 99.4},   {"classifier", "cw-noisy", 0.01, 99.2, 99.6},
      {"classifier", "lma", 0.01, 0.0, 0.0},    {"classifier", "cw", 0.1, 99.9, 100.0},
      {"classifier", "cw-noisy", 0.1, 74.9, 93.5}, {"classifier", "lma", 0.1, 0.0, 1.6},
      {"classifier", "cw", 1.0, 99.5, 99.7},    {"classifier", "cw-noisy", 1.0, 69.8, 81.6},
      {"classifier", "lma", 1.0, 0.0, 0.2},     {"classifier", "cw", 10.0, 98.1, 99.0},
      {"classifier", "cw-noisy", 10.0, 83.9, 92.0}, {"classifier", "lma", 10.0, 0.0, 0.1},
  };
  // Arms-race cells carry no epsilon.
  static const Key race[] = {
      {"adaptive", "lma", 0.0, 26.6, 62.7},
      {"adaptive", "adaptive", 0.0, 0.4, 1.7},
      {"iterative", "lma", 0.0, 49.4, 83.1},
      {"iterative", "adaptive", 0.0, 0.6, 2.9},
  };
  auto pick = [&](const Key& k) -> std::optional<double> {
    if (fpr_target == 0.01) return k.at1 / 100.0;
    if (fpr_target == 0.05) return k.at5 / 100.0;
    return std::nullopt;
  };
  for (const auto& k : table) {
    if (detector == k.detector && attack == k.attack && epsilon == k.epsilon) return pick(k);
  }
  for (const auto& k : race) {
    if (detector == k.detector && attack == k.attack) return pick(k);
  }
  return std::nullopt;
}

CsvTable result_csv(const std::vector<ResultRow>& rows, const std::string& hash) {
  CsvTable t{{"detector", "attack", "epsilon", "fpr_target", "tpr", "fpr", "n_adversarial", "n_benign", "attack_success",
              "reference_tpr", "config_hash"},
             {}};
  for (const auto& r : rows) {
    t.add({r.detector, r.attack, csv_num(r.epsilon), csv_num(r.fpr_target), csv_num(r.tpr), csv_num(r.fpr),
           csv_num(std::uint64_t{r.n_adversarial}), csv_num(std::uint64_t{r.n_benign}), csv_num(r.attack_success),
           r.reference_tpr ? csv_num(*r.reference_tpr) : "", hash});
  }
  return t;
}

CsvTable trace_csv(const std::vector<IterationTrace>& trace, const std::string& hash) {
  CsvTable t{{"iteration", "attack_success", "tpr_before", "tpr_after", "threshold", "config_hash"}, {}};
  for (const auto& tr : trace) {
    t.add({csv_num(std::uint64_t{tr.iteration}), csv_num(tr.attack_success), csv_num(tr.tpr_before), csv_num(tr.tpr_after),
           csv_num(tr.threshold), hash});
  }
  return t;
}

// ---- arms race --------------------------------------------------------------

namespace {

ResultRow classifier_row(const std::string& name, ClassifierFit& det, const FeatureSet& adv, const FeatureSet& benign,
                         const AttackRun& run, double fpr) {
  det.set_fpr(fpr);
  ResultRow row{name, attack_name(run.kind), run.epsilon, fpr, flag_rate(flag_classifier(det.detector, adv)),
                flag_rate(flag_classifier(det.detector, benign)), adv.ids.size(), benign.ids.size(), run.success_rate(),
                reference_tpr(name, attack_name(run.kind), run.epsilon, fpr)};
  return row;
}

}  // namespace

ArmsRaceResult run_armsrace(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const double eps = cfg.armsrace.epsilon;
  const LogitProfile profiles = calibration_profiles(ctx, eps);
  const auto rows = ctx.attack_rows(cfg.attack.samples);
  guard_evaluation_rows(ctx, rows);

  const AttackRun lma_fit = attack_rows(ctx, ctx.fit, AttackKind::lma, eps, &profiles, nullptr, "armsrace/fit");
  ClassifierFit adaptive = fit_detector_on(ctx, eps, lma_fit);
  adaptive.detector.provenance().attack = "lma";

  const AttackRun lma_test = attack_rows(ctx, rows, AttackKind::lma, eps, &profiles, nullptr, "armsrace/test");
  const FeatureSet lma_feat = adversarial_features(ctx, lma_test);
  const FeatureSet benign = benign_features(ctx, rows, eps);

  adaptive.set_fpr(cfg.fpr_targets.back());
  const AttackRun adapt1 =
      attack_rows(ctx, rows, AttackKind::adaptive, eps, &profiles, &adaptive.detector, "armsrace/adaptive-detector");
  const FeatureSet adapt1_feat = adversarial_features(ctx, adapt1);

  ArmsRaceResult result{{}, {}, adaptive.detector, adaptive.detector};
  for (double fpr : cfg.fpr_targets) {
    result.rows.push_back(classifier_row("adaptive", adaptive, lma_feat, benign, lma_test, fpr));
    result.rows.push_back(classifier_row("adaptive", adaptive, adapt1_feat, benign, adapt1, fpr));
  }

  const Samples pool = ctx.samples(ctx.fit);
  const FeatureSet pool_feat = benign_features(ctx, ctx.fit, eps);
  AttackConfig ac = cfg.attack.base;
  ac.noise_epsilon = eps;
  ac.seed = derive_seed(ac.seed, "armsrace/iterative", epsilon_key(eps));
  IterativeResult it = iterative_training(ctx.model, adaptive.detector, pool.x, pool.labels, pool.ids, pool_feat.features,
                                          adaptive.calibration_features, profiles, adversarial_noise(cfg, eps), ac,
                                          cfg.armsrace.iterative, cfg.fpr_targets.back());
  ClassifierFit iterative{std::move(it.detector), adaptive.calibration_features};
  result.trace = std::move(it.trace);

  iterative.set_fpr(cfg.fpr_targets.back());
  const AttackRun adapt2 =
      attack_rows(ctx, rows, AttackKind::adaptive, eps, &profiles, &iterative.detector, "armsrace/iterative-detector");
  const FeatureSet adapt2_feat = adversarial_features(ctx, adapt2);
  for (double fpr : cfg.fpr_targets) {
    result.rows.push_back(classifier_row("iterative", iterative, lma_feat, benign, lma_test, fpr));
    result.rows.push_back(classifier_row("iterative", iterative, adapt2_feat, benign, adapt2, fpr));
  }
  adaptive.set_fpr(cfg.fpr_targets.back());
  iterative.set_fpr(cfg.fpr_targets.back());
  result.adaptive_detector = adaptive.detector;
  result.iterative_detector = iterative.detector;
  return result;
}

// ---- probes -----------------------------------------------------------------

namespace {

std::size_t row_of(const Context& ctx, std::uint64_t sample_id) {
  for (std::size_t i = 0; i < ctx.data.size(); ++i) {
    if (ctx.data.ids[i] == sample_id) return i;
  }
  throw UsageError("sample id " + std::to_string(sample_id) + " out of range (dataset has " +
                   std::to_string(ctx.data.size()) + " samples)");
}

struct ProbeAttacks {
  std::size_t row;
  AttackRecord cw, lma;
};

ProbeAttacks probe_attacks(const Context& ctx, std::uint64_t sample_id) {
  const std::size_t row = row_of(ctx, sample_id);
  const double eps = ctx.cfg.armsrace.epsilon;
  const LogitProfile profiles = calibration_profiles(ctx, eps);
  const std::size_t rows[] = {row};
  auto cw = attack_rows(ctx, rows, AttackKind::cw, eps, nullptr, nullptr, "probe");
  auto lma = attack_rows(ctx, rows, AttackKind::lma, eps, &profiles, nullptr, "probe");
  return {row, cw.records.front(), lma.records.front()};
}

}  // namespace

CsvTable curves_table(const Context& ctx, std::uint64_t sample_id) {
  const auto& pr = ctx.cfg.probe;
  const ProbeAttacks pa = probe_attacks(ctx, sample_id);
  std::vector<double> sweep{0.0};
  const auto tail = log_sweep(pr.curve_min, pr.curve_max, pr.curve_points);
  sweep.insert(sweep.end(), tail.begin(), tail.end());

  CsvTable t{{"sample_id", "input", "label", "target", "epsilon"}, {}};
  for (std::size_t c = 0; c < ctx.data.k; ++c) t.header.push_back("p" + std::to_string(c));
  t.header.push_back("config_hash");
  const std::string hash = config_hash(ctx.cfg);
  const std::uint64_t seed = derive_seed(ctx.cfg.seed, "probe/curve");
  auto emit = [&](const std::string& input, std::span<const double> x, std::size_t target) {
    const Tensor p = probability_curve(ctx.model, x, sweep, pr.curve_count, seed, sample_id);
    for (std::size_t e = 0; e < sweep.size(); ++e) {
      std::vector<std::string> cells{csv_num(sample_id), input, csv_num(std::uint64_t{ctx.data.labels[pa.row]}),
                                     csv_num(std::uint64_t{target}), csv_num(sweep[e])};
      for (std::size_t c = 0; c < ctx.data.k; ++c) cells.push_back(csv_num(p.at(e, c)));
      cells.push_back(hash);
      t.add(std::move(cells));
    }
  };
  emit("benign", ctx.data.x(pa.row), ctx.data.labels[pa.row]);
  emit("cw", pa.cw.x_adv, pa.cw.target);
  emit("lma", pa.lma.x_adv, pa.lma.target);
  return t;
}

CsvTable cone_table(const Context& ctx, std::uint64_t sample_id) {
  const ProbeAttacks pa = probe_attacks(ctx, sample_id);
  CsvTable t{{"sample_id", "input", "label", "axis", "offset", "p_true", "adversarial_distance", "config_hash"}, {}};
  const std::string hash = config_hash(ctx.cfg);
  for (const auto* rec : {&pa.cw, &pa.lma}) {
    const char* name = rec == &pa.cw ? "cw" : "lma";
    const ConeGrid g = cone_probe(ctx.model, ctx.data.x(pa.row), rec->x_adv, ctx.data.labels[pa.row], ctx.cfg.probe.cone,
                                  sample_id);
    for (std::size_t i = 0; i < g.axis.size(); ++i) {
      for (std::size_t j = 0; j < g.offsets.size(); ++j) {
        t.add({csv_num(sample_id), name, csv_num(std::uint64_t{ctx.data.labels[pa.row]}), csv_num(g.axis[i]),
               csv_num(g.offsets[j]), csv_num(g.prob.at(i, j)), csv_num(g.adversarial_distance), hash});
      }
    }
  }
  return t;
}

// ---- command layer ----------------------------------------------------------

std::string epsilon_tag(double epsilon) { return csv_num(epsilon); }

namespace {

namespace fs = std::filesystem;

void claim_outputs(const fs::path& dir, const std::vector<fs::path>& files, bool force) {
  for (const auto& f : files) {
    if (fs::exists(dir / f) && !force) {
      throw UsageError("output " + (dir / f).string() + " already exists; pass --force to overwrite");
    }
  }
  fs::create_directories(dir);
}

void write_run_info(const ExperimentConfig& cfg, const std::string& command) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  std::ostringstream os;
  os << "command=" << command << "\nconfig_hash=" << config_hash(cfg) << "\ntimestamp=" << stamp << "\n";
  write_text_file(cfg.out / ("run_info_" + command + ".txt"), os.str());
  write_text_file(cfg.out / "config.ini", serialize(cfg));
}

std::string pct(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  os << 100.0 * v << "%";
  return os.str();
}

fs::path manifest_path(const ExperimentConfig& cfg, AttackKind kind, double eps) {
  return cfg.out / ("attack_" + std::string(attack_name(kind)) + "_eps" + epsilon_tag(eps) + ".csv");
}

fs::path adversarial_path(const ExperimentConfig& cfg, AttackKind kind, double eps) {
  return cfg.out / ("attack_" + std::string(attack_name(kind)) + "_eps" + epsilon_tag(eps) + ".advd");
}

std::vector<double> epsilons_of(const ExperimentConfig& cfg, const CommandOptions& opt) {
  return opt.epsilons ? *opt.epsilons : cfg.noise.epsilons;
}

std::vector<double> fprs_of(const ExperimentConfig& cfg, const CommandOptions& opt) {
  const auto f = opt.fprs ? *opt.fprs : cfg.fpr_targets;
  for (double v : f) {
    if (!(v > 0.0 && v <= 0.5)) throw ConfigError("FPR targets must lie in (0, 0.5]");
  }
  return f;
}

AttackKind required_attack(const CommandOptions& opt) {
  if (!opt.attack) throw UsageError("--attack is required; one of {cw, cw-noisy, lma, adaptive}");
  return parse_attack_kind(*opt.attack);
}

DetectorModel load_detector_for(const std::string& path, double eps) {
  DetectorModel det = load_detector(path);
  if (det.provenance().epsilon != eps) {
    throw PipelineError("epsilon mismatch: detector " + path + " was calibrated at epsilon=" +
                        csv_num(det.provenance().epsilon) + ", requested " + csv_num(eps));
  }
  return det;
}

}  // namespace

Context load_context(const ExperimentConfig& cfg) {
  const fs::path model_path = cfg.out / "model.advm";
  if (!fs::exists(model_path)) {
    throw PipelineError("model checkpoint not found: " + model_path.string() + " (run `advbench train` first)");
  }
  return Context(cfg, make_dataset(cfg), load_model(model_path));
}

std::string cmd_train(const ExperimentConfig& cfg, const CommandOptions& opt) {
  claim_outputs(cfg.out, {"model.advm", "dataset.advd", "train_report.csv"}, opt.force);
  TrainResult r = run_train(cfg);
  save_model(r.model, cfg.out / "model.advm");
  save_external(r.data, cfg.out / "dataset.advd");
  const std::string hash = config_hash(cfg);
  CsvTable t{{"metric", "epoch", "value", "config_hash"}, {}};
  for (std::size_t e = 0; e < r.report.epoch_loss.size(); ++e) {
    t.add({"loss", csv_num(std::uint64_t{e + 1}), csv_num(r.report.epoch_loss[e]), hash});
  }
  const std::string last = csv_num(std::uint64_t{r.report.epoch_loss.size()});
  t.add({"train_accuracy", last, csv_num(r.report.train_accuracy), hash});
  t.add({"test_accuracy", last, csv_num(r.report.test_accuracy), hash});
  write_csv(t, cfg.out / "train_report.csv");
  write_run_info(cfg, "train");
  return "trained " + std::to_string(r.model.parameter_count()) + " parameters; test accuracy " + pct(r.report.test_accuracy);
}

std::string cmd_attack(const ExperimentConfig& cfg, const CommandOptions& opt) {
  const AttackKind kind = required_attack(opt);
  if (kind == AttackKind::adaptive && !opt.detector) {
    throw UsageError("the adaptive attack needs --detector (a detector checkpoint or `classifier`)");
  }
  if (kind == AttackKind::adaptive && *opt.detector == "stat") {
    throw ConfigError("adaptive attack needs a classifier-based detector; the statistical test is not differentiable");
  }
  const auto eps_list = epsilons_of(cfg, opt);
  std::vector<fs::path> outs;
  for (double e : eps_list) {
    outs.push_back(manifest_path(cfg, kind, e).filename());
    outs.push_back(adversarial_path(cfg, kind, e).filename());
  }
  const Context ctx = load_context(cfg);
  claim_outputs(cfg.out, outs, opt.force);
  const auto rows = ctx.attack_rows(cfg.attack.samples);
  const std::string hash = config_hash(cfg);
  std::ostringstream summary;
  for (double eps : eps_list) {
    std::optional<LogitProfile> profiles;
    if (kind == AttackKind::lma || kind == AttackKind::adaptive) profiles = calibration_profiles(ctx, eps);
    std::optional<DetectorModel> det;
    if (kind == AttackKind::adaptive) {
      if (*opt.detector == "classifier") {
        ClassifierFit f = fit_classifier(ctx, eps);
        det = f.detector;
      } else {
        det = load_detector_for(*opt.detector, eps);
      }
    }
    const AttackRun run = attack_rows(ctx, rows, kind, eps, profiles ? &*profiles : nullptr, det ? &*det : nullptr, "test");

    Dataset adv;
    adv.k = ctx.data.k;
    adv.d = ctx.data.d;
    CsvTable m{{"sample_id", "label", "target", "source_prediction", "adversarial_prediction", "target_hit", "evaded", "linf",
                "final_loss", "attack", "epsilon", "config_hash"},
               {}};
    for (const auto& r : run.records) {
      adv.push_back(r.x_adv, r.label, Split::test, r.id);
      m.add({csv_num(r.id), csv_num(std::uint64_t{r.label}), csv_num(std::uint64_t{r.target}),
             csv_num(std::uint64_t{r.source_prediction}), csv_num(std::uint64_t{r.adversarial_prediction}),
             r.target_hit() ? "1" : "0", r.evaded() ? "1" : "0", csv_num(r.linf), csv_num(r.final_loss), attack_name(kind),
             csv_num(eps), hash});
    }
    save_external(adv, adversarial_path(cfg, kind, eps));
    write_csv(m, manifest_path(cfg, kind, eps));
    std::size_t evaded = 0;
    for (const auto& r : run.records) evaded += r.evaded();
    summary << attack_name(kind) << " eps=" << csv_num(eps) << ": target success " << pct(run.success_rate())
            << ", evasion " << pct(static_cast<double>(evaded) / static_cast<double>(run.records.size())) << " over "
            << run.records.size() << " samples\n";
  }
  write_run_info(cfg, "attack");
  return summary.str();
}

std::string cmd_detect(const ExperimentConfig& cfg, const CommandOptions& opt) {
  const AttackKind kind = required_attack(opt);
  if (!opt.detector) throw UsageError("--detector is required: stat, classifier, or a detector checkpoint path");
  const std::string det_arg = *opt.detector;
  const bool stat = det_arg == "stat", clf = det_arg == "classifier";
  const std::string det_name = stat ? "stat" : clf ? "classifier" : "checkpoint";
  const std::string out_name = "detect_" + det_name + "_" + attack_name(kind) + ".csv";
  const auto eps_list = epsilons_of(cfg, opt);
  const auto fpr_list = fprs_of(cfg, opt);
  const Context ctx = load_context(cfg);
  claim_outputs(cfg.out, {out_name}, opt.force);
  guard_evaluation_rows(ctx, ctx.test);
  const std::string hash = config_hash(cfg);

  std::vector<ResultRow> rows;
  for (double eps : eps_list) {
    const fs::path mpath = manifest_path(cfg, kind, eps);
    if (!fs::exists(mpath)) {
      throw PipelineError("adversarial manifest not found: " + mpath.string() + " (run `advbench attack --attack " +
                          attack_name(kind) + " --eps " + csv_num(eps) + "` first)");
    }
    const CsvTable m = read_csv(mpath);
    const Dataset adv = load_external(adversarial_path(cfg, kind, eps));
    if (adv.size() != m.rows.size()) throw PipelineError("manifest and adversarial set disagree in length: " + mpath.string());
    const std::size_t c_eps = m.column("epsilon"), c_hit = m.column("target_hit"), c_id = m.column("sample_id"),
                      c_hash = m.column("config_hash");
    Samples s{Tensor({1, 1}), {}, {}};
    std::vector<double> xs;
    for (std::size_t r = 0; r < m.rows.size(); ++r) {
      if (std::stod(m.rows[r][c_eps]) != eps) {
        throw PipelineError("epsilon mismatch: manifest " + mpath.string() + " row " + std::to_string(r + 1) +
                            " has epsilon " + m.rows[r][c_eps]);
      }
      if (m.rows[r][c_hash] != hash) {
        throw PipelineError("manifest " + mpath.string() + " was produced by a different configuration");
      }
      if (m.rows[r][c_hit] != "1") continue;
      const auto x = adv.x(r);
      xs.insert(xs.end(), x.begin(), x.end());
      s.labels.push_back(adv.labels[r]);
      s.ids.push_back(std::stoull(m.rows[r][c_id]));
    }
    if (s.ids.empty()) throw PipelineError("manifest " + mpath.string() + " holds no successful adversarial examples");
    s.x = Tensor({s.ids.size(), ctx.data.d}, std::move(xs));
    const FeatureSet adv_feat{feature_matrix(ctx.model, s.x, s.ids, adversarial_noise(cfg, eps)), s.labels, s.ids};
    const FeatureSet benign = benign_features(ctx, ctx.test, eps);
    const double success = static_cast<double>(s.ids.size()) / static_cast<double>(m.rows.size());

    if (stat) {
      StatFit fit = fit_stat_test(ctx, eps);
      for (double fpr : fpr_list) {
        fit.set_fpr(fpr);
        rows.push_back({det_name, attack_name(kind), eps, fpr, flag_rate(flag_stat(fit.detector, adv_feat)),
                        flag_rate(flag_stat(fit.detector, benign)), s.ids.size(), benign.ids.size(), success,
                        reference_tpr(det_name, attack_name(kind), eps, fpr)});
      }
    } else {
      ClassifierFit fit = clf ? fit_classifier(ctx, eps) : wrap_detector(ctx, load_detector_for(det_arg, eps));
      if (clf) save_detector(fit.detector, cfg.out / ("detector_classifier_eps" + epsilon_tag(eps) + ".advt"));
      for (double fpr : fpr_list) {
        fit.set_fpr(fpr);
        rows.push_back({det_name, attack_name(kind), eps, fpr, flag_rate(flag_classifier(fit.detector, adv_feat)),
                        flag_rate(flag_classifier(fit.detector, benign)), s.ids.size(), benign.ids.size(), success,
                        reference_tpr(det_name, attack_name(kind), eps, fpr)});
      }
    }
  }
  write_csv(result_csv(rows, hash), cfg.out / out_name);
  write_run_info(cfg, "detect");
  std::ostringstream summary;
  for (const auto& r : rows) {
    summary << r.detector << " vs " << r.attack << " eps=" << csv_num(r.epsilon) << " fpr_target=" << pct(r.fpr_target)
            << ": TPR " << pct(r.tpr) << ", FPR " << pct(r.fpr) << " (n_adv=" << r.n_adversarial << ")\n";
  }
  return summary.str();
}

std::string cmd_armsrace(const ExperimentConfig& cfg, const CommandOptions& opt) {
  const Context ctx = load_context(cfg);
  claim_outputs(cfg.out, {"armsrace_table.csv", "armsrace_trace.csv", "adaptive_detector.advt", "iterative_detector.advt"},
                opt.force);
  const ArmsRaceResult r = run_armsrace(ctx);
  const std::string hash = config_hash(cfg);
  write_csv(result_csv(r.rows, hash), cfg.out / "armsrace_table.csv");
  write_csv(trace_csv(r.trace, hash), cfg.out / "armsrace_trace.csv");
  save_detector(r.adaptive_detector, cfg.out / "adaptive_detector.advt");
  save_detector(r.iterative_detector, cfg.out / "iterative_detector.advt");
  write_run_info(cfg, "armsrace");
  std::ostringstream summary;
  for (const auto& row : r.rows) {
    summary << row.detector << " detector vs " << row.attack << " fpr_target=" << pct(row.fpr_target) << ": TPR "
            << pct(row.tpr) << ", FPR " << pct(row.fpr) << "\n";
  }
  return summary.str();
}

std::string cmd_curves(const ExperimentConfig& cfg, const CommandOptions& opt) {
  if (opt.sample_ids.empty()) throw UsageError("curves needs at least one sample id");
  const Context ctx = load_context(cfg);
  std::vector<fs::path> outs;
  for (auto id : opt.sample_ids) outs.push_back("curves_" + std::to_string(id) + ".csv");
  for (auto id : opt.sample_ids) row_of(ctx, id);
  claim_outputs(cfg.out, outs, opt.force);
  for (std::size_t i = 0; i < outs.size(); ++i) write_csv(curves_table(ctx, opt.sample_ids[i]), cfg.out / outs[i]);
  write_run_info(cfg, "curves");
  return "wrote " + std::to_string(outs.size()) + " curve file(s)";
}

std::string cmd_cone(const ExperimentConfig& cfg, const CommandOptions& opt) {
  if (opt.sample_ids.size() != 1) throw UsageError("cone needs exactly one sample id");
  const Context ctx = load_context(cfg);
  const auto id = opt.sample_ids.front();
  row_of(ctx, id);
  const fs::path out = "cone_" + std::to_string(id) + ".csv";
  claim_outputs(cfg.out, {out}, opt.force);
  write_csv(cone_table(ctx, id), cfg.out / out);
  write_run_info(cfg, "cone");
  return "wrote " + (cfg.out / out).string();
}

}  // namespace advbench
