// preblock: command-line front end for the label -> split -> featurize ->
// infer -> eval pipeline, plus calibration, ablation, streaming, latency and
// parity tools.
//
// Exit codes: 0 ok, 2 usage, 3 contract, 4 format, 5 integrity, 6 numeric,
// 7 parity FAIL. Machine-readable summaries go to stdout with --json; logs go
// to stderr.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "preblock/fixtures.hpp"
#include "preblock/preblock.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace preblock;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitParityFail = 7;

// ---------------------------------------------------------------------------
// File helpers

std::string read_file(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  if (!in)
    throw ContractError("cannot open input " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path &p, const std::string &bytes) {
  if (p.has_parent_path())
    fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out)
    throw ContractError("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

json read_json(const fs::path &p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error &e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

std::string pretty(const json &j) { return j.dump(2) + "\n"; }

std::vector<LabeledClip> load_labels(const fs::path &p) {
  std::istringstream in(read_file(p));
  return read_labels_jsonl(in);
}

std::vector<LogitRow> load_logits(const fs::path &p) {
  std::istringstream in(read_file(p));
  return read_logit_dump(in);
}

fs::path wav_path(const fs::path &audio_root, const ClipRecord &c) {
  return audio_root / c.show / c.episode / (clip_key(c) + ".wav");
}

fs::path cache_path(const fs::path &cache_dir, const std::string &key) {
  return cache_dir / (key + ".pbf");
}

// ---------------------------------------------------------------------------
// Config merge: flag value if given, else config file, else default.

struct Context {
  std::string config_file;
  bool json_out = false;
  RunConfig config;
};

fs::path need_path(const std::optional<std::string> &flag,
                   const std::optional<fs::path> &configured, const char *what) {
  if (flag)
    return *flag;
  if (configured)
    return *configured;
  throw ContractError(std::string("missing ") + what +
                      " (pass the flag or set it in the config file)");
}

std::optional<fs::path> opt_path(const std::optional<std::string> &flag,
                                 const std::optional<fs::path> &configured) {
  if (flag)
    return fs::path(*flag);
  return configured;
}

/// Output path: --out, else out_dir/default_name.
fs::path out_path(const std::optional<std::string> &flag, const RunConfig &c,
                  const char *default_name) {
  if (flag)
    return *flag;
  if (c.paths.out_dir)
    return *c.paths.out_dir / default_name;
  throw ContractError("missing --out (or [paths] out_dir in the config file)");
}

template <typename T> T pick(const std::optional<T> &flag, const T &configured) {
  return flag ? *flag : configured;
}

/// Clips selected by --subset against a split file; all clips when absent.
ClipFilter subset_filter(const std::optional<fs::path> &split_file,
                         const std::optional<std::string> &subset) {
  if (!subset)
    return {};
  if (!split_file)
    throw ContractError("--subset needs a split file (--split or [paths] split)");
  auto assignment = std::make_shared<SplitAssignment>(split_from_json(read_json(*split_file)));
  const Split want = parse_split(*subset);
  return [assignment, want](const LabeledClip &c) {
    return assignment->at({c.clip.show, c.clip.episode}) == want;
  };
}

std::vector<const LabeledClip *> select(const std::vector<LabeledClip> &labeled,
                                        const ClipFilter &filter) {
  std::vector<const LabeledClip *> out;
  for (const auto &c : labeled)
    if (!filter || filter(c))
      out.push_back(&c);
  return out;
}

void emit(const Context &ctx, const json &summary, const std::string &human) {
  if (ctx.json_out)
    std::cout << summary.dump() << '\n';
  else
    std::cout << human << '\n';
}

void log(const std::string &msg) { std::cerr << "preblock: " << msg << '\n'; }

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

} // namespace


// ---------------------------------------------------------------------------
// Subcommands

namespace {

struct LabelCmd {
  std::optional<std::string> metadata, out, stats;
  std::optional<std::int64_t> gap_limit;
  std::optional<int> threshold;
  std::string offset_unit = "samples";

  void add(CLI::App &app) {
    auto *c = app.add_subcommand("label", "Derive event and pre-block labels from clip metadata");
    c->add_option("--metadata", metadata, "Clip metadata CSV");
    c->add_option("--out", out, "Labels JSONL output");
    c->add_option("--stats", stats, "Corpus statistics JSON output");
    c->add_option("--gap-limit", gap_limit, "Adjacency gap limit in samples (default 80000)");
    c->add_option("--threshold", threshold, "Annotator-count binarization threshold (1..3)")
        ->check(CLI::Range(1, 3));
    c->add_option("--offset-unit", offset_unit, "Start/Stop unit")
        ->check(CLI::IsMember({"samples", "ms"}));
  }

  int run(const Context &ctx) const {
    const auto &cfg = ctx.config;
    const auto gap = pick(gap_limit, cfg.params.gap_limit_samples);
    const auto thr = pick(threshold, cfg.params.threshold);
    ClipSchema schema;
    schema.offset_unit = offset_unit == "ms" ? OffsetUnit::milliseconds : OffsetUnit::samples;
    std::istringstream in(read_file(need_path(metadata, cfg.paths.metadata, "--metadata")));
    auto labeled = derive_corpus_labels(parse_clip_table(in, schema), gap, thr);
    std::ostringstream jsonl;
    write_labels_jsonl(jsonl, labeled);
    const auto out_file = out_path(out, cfg, "labels.jsonl");
    write_file(out_file, jsonl.str());

    const auto s = corpus_stats(labeled);
    json summary = to_json(s);
    summary["gap_limit_samples"] = gap;
    summary["threshold"] = thr;
    if (const auto stats_file = stats ? std::optional<fs::path>(*stats)
                                : cfg.paths.out_dir ? std::optional(*cfg.paths.out_dir / "label_stats.json")
                                                    : std::nullopt)
      write_file(*stats_file, pretty(summary));
    log("wrote " + std::to_string(labeled.size()) + " labeled clips to " + out_file.string());
    emit(ctx, summary,
         "clips " + std::to_string(s.clips) + ", candidate pairs " +
             std::to_string(s.candidate_pairs) + ", retained pairs " +
             std::to_string(s.retained_pairs));
    return 0;
  }
};

struct SplitCmd {
  std::optional<std::string> labels, out, report;
  std::optional<std::uint64_t> seed;

  void add(CLI::App &app) {
    auto *c = app.add_subcommand("split", "Episode-grouped train/val/test split");
    c->add_option("--labels", labels, "Labels JSONL");
    c->add_option("--out", out, "Split JSON output");
    c->add_option("--report", report, "Split report JSON output");
    c->add_option("--seed", seed, "Split seed (default 42)");
  }

  int run(const Context &ctx) const {
    const auto &cfg = ctx.config;
    const auto labeled = load_labels(need_path(labels, cfg.paths.labels, "--labels"));
    const auto s = pick(seed, cfg.params.seed);
    const auto assignment = assign_splits(episode_groups(labeled), kDefaultFractions, s);
    const auto r = verify_split(assignment, labeled);
    const auto out_file = out_path(out, cfg, "split.json");
    write_file(out_file, pretty(to_json(assignment)));
    json summary = to_json(r);
    summary["seed"] = s;
    summary["groups"] = assignment.groups.size();
    if (report)
      write_file(*report, pretty(summary));
    log("wrote split of " + std::to_string(assignment.groups.size()) + " groups to " +
        out_file.string());
    std::string human = "seed " + std::to_string(s);
    for (auto sp : kSplits)
      human += ", " + std::string(split_name(sp)) + " " +
               std::to_string(r.splits[static_cast<std::size_t>(sp)].groups) + " groups";
    emit(ctx, summary, human);
    return 0;
  }
};

struct FeaturizeCmd {
  std::optional<std::string> labels, audio_root, cache_dir, split, subset;

  void add(CLI::App &app) {
    auto *c = app.add_subcommand("featurize", "Write normalized log-mel caches (PBF1)");
    c->add_option("--labels", labels, "Labels JSONL");
    c->add_option("--audio-root", audio_root, "Audio root: <root>/<show>/<episode>/<clip_key>.wav");
    c->add_option("--cache-dir", cache_dir, "Feature cache directory");
    c->add_option("--split", split, "Split JSON");
    c->add_option("--subset", subset, "Only clips of this split")
        ->check(CLI::IsMember({"train", "val", "test"}));
  }

  int run(const Context &ctx) const {
    const auto &cfg = ctx.config;
    const auto labeled = load_labels(need_path(labels, cfg.paths.labels, "--labels"));
    const auto root = need_path(audio_root, cfg.paths.audio_root, "--audio-root");
    const auto cache = need_path(cache_dir, cfg.paths.cache_dir, "--cache-dir");
    const auto filter = subset_filter(opt_path(split, cfg.paths.split), subset);
    fs::create_directories(cache);
    std::size_t n = 0;
    for (const auto *c : select(labeled, filter)) {
      const auto wav = wav_path(root, c->clip);
      if (!fs::exists(wav))
        throw ContractError("featurize: missing audio " + wav.string());
      cache_write(featurize(read_wav(wav)), cache_path(cache, clip_key(c->clip)));
      ++n;
    }
    log("featurized " + std::to_string(n) + " clips into " + cache.string());
    emit(ctx, json{{"clips", n}, {"cache_dir", cache.string()}},
         "featurized " + std::to_string(n) + " clips");
    return 0;
  }
};

struct InferCmd {
  std::optional<std::string> weights, labels, cache_dir, split, subset, out;
  std::optional<std::size_t> random;
  std::optional<std::uint64_t> seed;

  void add(CLI::App &app) {
    auto *c = app.add_subcommand("infer", "Score cached features and write a logit dump");
    c->add_option("--weights", weights, "PBW1 weight file");
    c->add_option("--labels", labels, "Labels JSONL (selects the clips to score)");
    c->add_option("--cache-dir", cache_dir, "Feature cache directory");
    c->add_option("--split", split, "Split JSON");
    c->add_option("--subset", subset, "Only clips of this split")
        ->check(CLI::IsMember({"train", "val", "test"}));
    c->add_option("--random", random,
                  "Score N seeded random spectrograms (keys rand_<i>) instead of clips; "
                  "with --cache-dir the inputs are also written as PBF1");
    c->add_option("--seed", seed, "Seed for --random (default 42)");
    c->add_option("--out", out, "Logit dump JSONL output");
  }

  int run(const Context &ctx) const {
    const auto &cfg = ctx.config;
    const auto w = load_weights(need_path(weights, cfg.paths.weights, "--weights"));
    const CnnModel model(w);
    std::vector<LogitRow> rows;
    json summary{{"arch", w.arch_id}};
    if (random) {
      const auto s = pick(seed, cfg.params.seed);
      const auto cache = opt_path(cache_dir, cfg.paths.cache_dir);
      if (cache)
        fs::create_directories(*cache);
      const auto inputs = random_spectrograms(*random, s, w.arch().input_rows, w.arch().input_cols);
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        // Half-precision rounding keeps dump and cache on identical inputs.
        const auto bytes = encode_feature_cache(inputs[i]);
        const auto key = "rand_" + std::to_string(i);
        if (cache)
          write_file(cache_path(*cache, key), bytes);
        rows.push_back({key, model.forward(decode_feature_cache(bytes))});
      }
      summary["seed"] = s;
    } else {
      const auto labeled = load_labels(need_path(labels, cfg.paths.labels, "--labels"));
      const auto cache = need_path(cache_dir, cfg.paths.cache_dir, "--cache-dir");
      const auto filter = subset_filter(opt_path(split, cfg.paths.split), subset);
      for (const auto *c : select(labeled, filter)) {
        const auto key = clip_key(c->clip);
        const auto file = cache_path(cache, key);
        if (!fs::exists(file))
          throw ContractError("infer: missing feature cache " + file.string());
        rows.push_back({key, model.forward(cache_read(file))});
      }
    }
    std::ostringstream dump;
    write_logit_dump(dump, rows);
    const auto out_file = out_path(out, cfg, "logits.jsonl");
    write_file(out_file, dump.str());
    summary["clips"] = rows.size();
    log("wrote " + std::to_string(rows.size()) + " logit rows to " + out_file.string());
    emit(ctx, summary, "scored " + std::to_string(rows.size()) + " inputs");
    return 0;
  }
};

/// Logits joined to labels for one head over the clips a filter selects.
/// The preblock head uses valid_preblock clips only.
std::pair<std::vector<double>, std::vector<bool>>
head_samples(const std::vector<LogitRow> &rows, const std::vector<LabeledClip> &labeled,
             const ClipFilter &filter, bool preblock_head) {
  std::map<std::string, const LabeledClip *> by_key;
  for (const auto &c : labeled)
    by_key.emplace(clip_key(c.clip), &c);
  std::vector<double> x;
  std::vector<bool> y;
  for (const auto &r : rows) {
    const auto it = by_key.find(r.clip_key);
    if (it == by_key.end())
      throw IntegrityError("logit row '" + r.clip_key + "' has no label");
    const auto &c = *it->second;
    if (filter && !filter(c))
      continue;
    if (preblock_head) {
      if (!c.valid_preblock)
        continue;
      x.push_back(r.logits.preblock_logit);
      y.push_back(c.y_preblock.value());
    } else {
      x.push_back(r.logits.event_logit);
      y.push_back(c.y_event);
    }
  }
  return {x, y};
}

struct EvalCmd {
  std::optional<std::string> logits, labels, split, subset, calibration, out, csv, subgroups;
  std::optional<std::string> fit_split, apply_split;
  std::string scores = "raw";
  bool no_threshold = false;
  std::optional<std::size_t> resamples;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;

  void add(CLI::App &app) {
    auto *c = app.add_subcommand("eval", "AUC with bootstrap CIs per pre-block target");
    c->add_option("--logits", logits, "Logit dump JSONL")->required();
    c->add_option("--labels", labels, "Labels JSONL");
    c->add_option("--split", split, "Split JSON");
    c->add_option("--subset", subset, "Evaluate this split only")
        ->check(CLI::IsMember({"train", "val", "test"}));
    c->add_option("--calibration", calibration, "Calibration JSON for the preblock head");
    c->add_option("--scores", scores, "Score source")->check(CLI::IsMember({"raw", "calibrated"}));
    c->add_option("--fit-split", fit_split, "Split the Youden threshold is fit on (default val)")
        ->check(CLI::IsMember({"train", "val", "test"}));
    c->add_option("--apply-split", apply_split,
                  "Split the threshold is applied to (default --subset, else test)")
        ->check(CLI::IsMember({"train", "val", "test"}));
    c->add_flag("--no-threshold", no_threshold, "Skip the Youden threshold report");
    c->add_option("--resamples", resamples, "Bootstrap resamples (default 2000)");
    c->add_option("--seed", seed, "Bootstrap seed (default 42)");
    c->add_option("--threads", threads, "Bootstrap worker threads (default 1)");
    c->add_option("--out", out, "Report JSON output");
    c->add_option("--csv", csv, "Report CSV output");
    c->add_option("--subgroups", subgroups, "Per-show report JSON output");
  }

  int run(const Context &ctx) const {
    const auto &cfg = ctx.config;
    const auto rows = load_logits(*logits);
    const auto labeled = load_labels(need_path(labels, cfg.paths.labels, "--labels"));
    const auto split_file = opt_path(split, cfg.paths.split);
    HeadCalibration cal;
    if (const auto cal_file = opt_path(calibration, cfg.paths.calibration))
      cal.preblock = calibration_from_json(read_json(*cal_file));
    std::vector<PredictionRecord> preds;
    preds.reserve(rows.size());
    for (const auto &r : rows)
      preds.push_back(make_prediction(r.clip_key, r.logits, cal));

    EvalOptions opt;
    opt.bootstrap.resamples = pick(resamples, cfg.params.bootstrap_resamples);
    opt.bootstrap.seed = pick(seed, cfg.params.seed);
    opt.bootstrap.threads = pick(threads, cfg.params.threads);
    opt.scores = scores == "calibrated" ? ScoreSource::calibrated : ScoreSource::raw;
    const auto filter = subset_filter(split_file, subset);
    auto report = stratified_eval(preds, labeled, filter, opt);
    if (split_file && !no_threshold) {
      const std::string fit = fit_split.value_or("val");
      const std::string to = apply_split ? *apply_split : subset.value_or("test");
      try {
        report.threshold = threshold_report(preds, labeled, subset_filter(split_file, fit),
                                            subset_filter(split_file, to), opt.scores);
      } catch (const DegenerateDataError &e) {
        throw DegenerateDataError(std::string(e.what()) + " (split '" + fit +
                                  "'; pick another --fit-split or pass --no-threshold)");
      }
    }
    const auto out_file = out_path(out, cfg, "eval.json");
    write_file(out_file, pretty(to_json(report)));
    if (csv) {
      std::ostringstream s;
      write_eval_csv(s, report);
      write_file(*csv, s.str());
    }
    if (subgroups)
      write_file(*subgroups, pretty(to_json(subgroup_eval(preds, labeled, filter, opt))));
    log("wrote " + out_file.string());
    std::string human;
    for (const auto &r : report.rows)
      human += r.target + " n=" + std::to_string(r.n) + " auc=" +
               (r.auc ? fmt(*r.auc) : std::string("NA")) + "\n";
    human.pop_back();
    emit(ctx, to_json(report), human);
    return 0;
  }
};

struct CalibrateCmd {
  std::optional<std::string> logits, labels, split, out, reliability, report;
  std::string fit_split = "val", apply_split = "test", method = "platt", head = "preblock";
  std::optional<std::size_t> bins;

  void add(CLI::App &app) {
    auto *c = app.add_subcommand("calibrate", "Fit Platt or isotonic calibration");
    c->add_option("--logits", logits, "Logit dump JSONL")->required();
    c->add_option("--labels", labels, "Labels JSONL");
    c->add_option("--split", split, "Split JSON");
    c->add_option("--fit-split", fit_split, "Split to fit on")
        ->check(CLI::IsMember({"train", "val", "test"}));
    c->add_option("--apply-split", apply_split, "Split to report ECE/Brier on")
        ->check(CLI::IsMember({"train", "val", "test"}));
    c->add_option("--method", method, "Calibration family")
        ->check(CLI::IsMember({"platt", "isotonic"}));
    c->add_option("--head", head, "Head to calibrate")->check(CLI::IsMember({"preblock", "event"}));
    c->add_option("--bins", bins, "ECE bins (default 15)");
    c->add_option("--out", out, "Calibration JSON output");
    c->add_option("--reliability", reliability, "Reliability CSV output (calibrated, apply split)");
    c->add_option("--report", report, "ECE/Brier report JSON output");
  }

  int run(const Context &ctx) const {
    const auto &cfg = ctx.config;
    const auto rows = load_logits(*logits);
    const auto labeled = load_labels(need_path(labels, cfg.paths.labels, "--labels"));
    const auto split_file = need_path(split, cfg.paths.split, "--split");
    const bool pre = head == "preblock";
    const auto [fx, fy] = head_samples(rows, labeled, subset_filter(split_file, fit_split), pre);
    const auto model = method == "platt" ? fit_platt(fx, fy) : fit_isotonic(fx, fy);
    const auto [ax, ay] = head_samples(rows, labeled, subset_filter(split_file, apply_split), pre);
    std::vector<double> raw, calibrated;
    for (double l : ax) {
      raw.push_back(sigmoid(l));
      calibrated.push_back(apply(model, l));
    }
    const auto n_bins = pick(bins, cfg.params.ece_bins);
    const auto before = ece_brier(raw, ay, n_bins);
    const auto after = ece_brier(calibrated, ay, n_bins);
    const auto out_file = out_path(out, cfg, "calibration.json");
    write_file(out_file, pretty(to_json(model)));
    if (reliability) {
      std::ostringstream s;
      write_reliability_csv(s, after);
      write_file(*reliability, s.str());
    }
    const json summary{{"method", method},      {"head", head},
                       {"fit_split", fit_split}, {"apply_split", apply_split},
                       {"fit_n", fx.size()},     {"apply_n", ax.size()},
                       {"raw", {{"ece", before.ece}, {"brier", before.brier}}},
                       {"calibrated", {{"ece", after.ece}, {"brier", after.brier}}},
                       {"calibration", to_json(model)}};
    if (report)
      write_file(*report, pretty(summary));
    log("wrote " + out_file.string());
    emit(ctx, summary,
         "ECE " + fmt(before.ece) + " -> " + fmt(after.ece) + ", Brier " + fmt(before.brier) +
             " -> " + fmt(after.brier));
    return 0;
  }
};

struct AblateCmd {
  std::optional<std::string> weights, labels, cache_dir, split, subset, out, csv;
  std::optional<std::vector<std::size_t>> sweep;

  void add(CLI::App &app) {
    auto *c = app.add_subcommand("ablate", "Pre-block AUC with the last N frames zeroed");
    c->add_option("--weights", weights, "PBW1 weight file");
    c->add_option("--labels", labels, "Labels JSONL");
    c->add_option("--cache-dir", cache_dir, "Feature cache directory");
    c->add_option("--split", split, "Split JSON");
    c->add_option("--subset", subset, "Only clips of this split")
        ->check(CLI::IsMember({"train", "val", "test"}));
    c->add_option("--mask-frames", sweep, "Mask sweep in frames (default 0,4,8,16,32)")
        ->delimiter(',');
    c->add_option("--out", out, "Report JSON output");
    c->add_option("--csv", csv, "Report CSV output");
  }

  int run(const Context &ctx) const {
    const auto &cfg = ctx.config;
    const CnnModel model(load_weights(need_path(weights, cfg.paths.weights, "--weights")));
    const auto labeled = load_labels(need_path(labels, cfg.paths.labels, "--labels"));
    const auto cache = need_path(cache_dir, cfg.paths.cache_dir, "--cache-dir");
    const auto filter = subset_filter(opt_path(split, cfg.paths.split), subset);
    std::vector<FeatureTensor> features;
    std::vector<std::string> keys;
    for (const auto *c : select(labeled, filter)) {
      if (!c->valid_preblock)
        continue;
      keys.push_back(clip_key(c->clip));
      const auto file = cache_path(cache, keys.back());
      if (!fs::exists(file))
        throw ContractError("ablate: missing feature cache " + file.string());
      features.push_back(cache_read(file));
    }
    const auto r = tail_mask_sweep(model, features, keys, labeled, filter,
                                   sweep ? *sweep : cfg.params.mask_sweep);
    const auto out_file = out_path(out, cfg, "ablation.json");
    write_file(out_file, pretty(to_json(r)));
    if (csv) {
      std::ostringstream s;
      write_ablation_csv(s, r);
      write_file(*csv, s.str());
    }
    std::ostringstream human;
    write_ablation_csv(human, r);
    auto text = human.str();
    text.pop_back();
    emit(ctx, to_json(r), text);
    return 0;
  }
};

struct StreamCmd {
  std::optional<std::string> weights, wav, calibration, out;

  void add(CLI::App &app) {
    auto *c = app.add_subcommand("stream", "Rolling 3 s windows at 4 Hz over a recording");
    c->add_option("--weights", weights, "PBW1 weight file");
    c->add_option("--wav", wav, "16 kHz WAV input")->required();
    c->add_option("--calibration", calibration, "Calibration JSON for the preblock head");
    c->add_option("--out", out, "Stream events JSON output");
  }

  int run(const Context &ctx) const {
    const auto &cfg = ctx.config;
    const CnnModel model(load_weights(need_path(weights, cfg.paths.weights, "--weights")));
    std::optional<CalibrationModel> cal;
    if (const auto f = opt_path(calibration, cfg.paths.calibration))
      cal = calibration_from_json(read_json(*f));
    const auto r = stream_simulate(read_wav(*wav), model, cal);
    const auto j = to_json(r);
    if (out)
      write_file(*out, pretty(j));
    emit(ctx, json{{"windows", r.events.size()}, {"latency", to_json(r.latency)}},
         std::to_string(r.events.size()) + " windows, mean " + fmt(r.latency.mean_ms, 3) +
             " ms, budget utilization " + fmt(r.latency.budget_utilization, 5));
    return 0;
  }
};

struct BenchCmd {
  std::optional<std::string> weights, out, trials_csv;
  std::size_t trials = 500, warmup = 20, inputs = 50;
  std::optional<std::uint64_t> seed;

  void add(CLI::App &app) {
    auto *c = app.add_subcommand("bench", "Single-threaded forward-pass latency");
    c->add_option("--weights", weights, "PBW1 weight file (default: seeded init)");
    c->add_option("--trials", trials, "Timed trials")->check(CLI::PositiveNumber);
    c->add_option("--warmup", warmup, "Untimed warmup calls");
    c->add_option("--inputs", inputs, "Distinct random spectrograms")->check(CLI::PositiveNumber);
    c->add_option("--seed", seed, "Seed for inputs and default weights (default 42)");
    c->add_option("--out", out, "Latency JSON output");
    c->add_option("--trials-csv", trials_csv, "Per-trial CSV output");
  }

  int run(const Context &ctx) const {
    const auto &cfg = ctx.config;
    const auto s = pick(seed, cfg.params.seed);
    const auto wfile = opt_path(weights, cfg.paths.weights);
    const auto w = wfile ? load_weights(*wfile) : init_weights(s);
    const CnnModel model(w);
    const auto x = random_spectrograms(inputs, s, w.arch().input_rows, w.arch().input_cols);
    const auto stats = latency_bench(model, trials, warmup, x);
    json j = to_json(stats);
    j["seed"] = s;
    j["arch"] = w.arch_id;
    if (out)
      write_file(*out, pretty(j));
    if (trials_csv) {
      std::ostringstream csv;
      write_trials_csv(csv, stats.trial_ns);
      write_file(*trials_csv, csv.str());
    }
    emit(ctx, j,
         "mean " + fmt(stats.mean_ms, 3) + " ms, median " + fmt(stats.median_ms, 3) +
             " ms, p95 " + fmt(stats.p95_ms, 3) + " ms over " + std::to_string(trials) +
             " trials");
    return 0;
  }
};

struct ParityCmd {
  std::string first, second;
  double tolerance = kParitySanityTolerance;
  std::optional<std::string> out;

  void add(CLI::App &app) {
    auto *c = app.add_subcommand("parity", "Compare two logit dumps");
    c->add_option("first", first, "Logit dump JSONL")->required();
    c->add_option("second", second, "Logit dump JSONL")->required();
    c->add_option("--tolerance", tolerance, "PASS iff max |delta| <= tolerance");
    c->add_option("--out", out, "Parity report JSON output");
  }

  int run(const Context &ctx) const {
    const auto r = parity_check(load_logits(first), load_logits(second), tolerance);
    if (out)
      write_file(*out, pretty(to_json(r)));
    std::string human = std::string(r.pass ? "PASS" : "FAIL") + " max |delta| event " +
                        fmt(r.max_event, 6) + ", preblock " + fmt(r.max_preblock, 6);
    for (const auto &e : r.worst)
      if (!(e.max_delta() <= tolerance))
        human += "\n  " + e.clip_key + " " + fmt(e.max_delta(), 6);
    emit(ctx, to_json(r), human);
    return r.pass ? 0 : kExitParityFail;
  }
};

struct InitWeightsCmd {
  std::uint64_t seed = kDefaultSeed;
  std::string arch = "pbcnn-v1";
  std::string out;

  void add(CLI::App &app) {
    auto *c = app.add_subcommand("init-weights", "Write seeded initial weights as PBW1");
    c->add_option("--seed", seed, "Initialization seed");
    c->add_option("--arch", arch, "Architecture id");
    c->add_option("--out", out, "PBW1 output")->required();
  }

  int run(const Context &ctx) const {
    const auto w = init_weights(seed, arch_by_id(arch));
    write_file(out, encode_pbw1(w));
    emit(ctx, json{{"arch", arch}, {"seed", seed}, {"out", out}},
         "wrote " + arch + " weights (seed " + std::to_string(seed) + ") to " + out);
    return 0;
  }
};

struct MakeFixtureCmd {
  std::string out_dir;
  fixtures::CorpusSpec spec;
  bool no_audio = false;

  void add(CLI::App &app) {
    auto *c = app.add_subcommand("make-fixture",
                                 "Write a synthetic metadata CSV and matching clip audio");
    c->add_option("--out-dir", out_dir, "Output directory")->required();
    c->add_option("--shows", spec.shows, "Shows");
    c->add_option("--episodes", spec.episodes_per_show, "Episodes per show");
    c->add_option("--min-clips", spec.min_clips, "Minimum clips per episode");
    c->add_option("--max-clips", spec.max_clips, "Maximum clips per episode");
    c->add_option("--seed", spec.seed, "Fixture seed");
    c->add_flag("--no-audio", no_audio, "Metadata only");
  }

  int run(const Context &ctx) const {
    if (spec.min_clips == 0 || spec.max_clips < spec.min_clips)
      throw ContractError("make-fixture: need 0 < min-clips <= max-clips");
    const auto records = fixtures::synthetic_corpus(spec);
    std::ostringstream csv;
    fixtures::write_sep28k_csv(csv, records);
    const fs::path dir(out_dir);
    write_file(dir / "metadata.csv", csv.str());
    if (!no_audio)
      for (std::size_t i = 0; i < records.size(); ++i) {
        const auto p = wav_path(dir / "audio", records[i]);
        fs::create_directories(p.parent_path());
        write_wav(p, fixtures::synthetic_waveform(spec.seed, i));
      }
    emit(ctx, json{{"clips", records.size()}, {"seed", spec.seed}, {"out_dir", out_dir}},
         "wrote " + std::to_string(records.size()) + " clips to " + out_dir);
    return 0;
  }
};

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"preblock: pre-block stuttering prediction pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Context ctx;
  app.add_option("--config", ctx.config_file, "TOML run config; flags take precedence");
  app.add_flag("--json", ctx.json_out, "Machine-readable summary on stdout");

  LabelCmd label;
  SplitCmd split;
  FeaturizeCmd featurize_cmd;
  InferCmd infer;
  EvalCmd eval;
  CalibrateCmd calibrate;
  AblateCmd ablate;
  StreamCmd stream;
  BenchCmd bench;
  ParityCmd parity;
  InitWeightsCmd init;
  MakeFixtureCmd fixture;
  label.add(app);
  split.add(app);
  featurize_cmd.add(app);
  infer.add(app);
  eval.add(app);
  calibrate.add(app);
  ablate.add(app);
  stream.add(app);
  bench.add(app);
  parity.add(app);
  init.add(app);
  fixture.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (!ctx.config_file.empty())
      ctx.config = load_config(ctx.config_file);
    const auto *sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "label") return label.run(ctx);
    if (name == "split") return split.run(ctx);
    if (name == "featurize") return featurize_cmd.run(ctx);
    if (name == "infer") return infer.run(ctx);
    if (name == "eval") return eval.run(ctx);
    if (name == "calibrate") return calibrate.run(ctx);
    if (name == "ablate") return ablate.run(ctx);
    if (name == "stream") return stream.run(ctx);
    if (name == "bench") return bench.run(ctx);
    if (name == "parity") return parity.run(ctx);
    if (name == "init-weights") return init.run(ctx);
    if (name == "make-fixture") return fixture.run(ctx);
    return kExitUsage;
  } catch (const Error &e) {
    log(std::string("error: ") + e.what());
    return e.exit_code();
  } catch (const fs::filesystem_error &e) {
    log(std::string("error: ") + e.what());
    return static_cast<int>(ErrorKind::contract);
  } catch (const json::exception &e) {
    log(std::string("error: ") + e.what());
    return static_cast<int>(ErrorKind::format);
  } catch (const std::exception &e) {
    log(std::string("error: ") + e.what());
    return 1;
  }
}
