#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "multicert/baseline.hpp"
#include "multicert/io.hpp"
#include "multicert/oracle.hpp"
#include "multicert/parallel.hpp"
#include "multicert/sampling.hpp"

// Orchestration: ties ingestion, the certification engines, and emission
// together. Numeric work fans out over a worker pool; everything written
// to disk is assembled serially in input order, so outputs are identical
// at any worker count.

namespace multicert {
namespace pipeline {

struct RunOptions {
  int jobs = 1;
  std::vector<double> sweep_alpha;
  std::vector<long> sweep_n;
};

namespace detail_pipe {

inline void write_file(const std::string& dir, const std::string& name,
                       const std::function<void(std::ostream&)>& emit) {
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/" + name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open output file: " + path);
  emit(out);
  if (!out) throw DataError("write failure on: " + path);
}

inline std::vector<long> budget_at(const io::RunConfig& cfg, long r1) {
  return ray_budget(cfg.direction, cfg.modalities.size(), r1);
}

inline long pool_sum(const std::vector<long>& budget) {
  return std::accumulate(budget.begin(), budget.end(), 0L);
}

inline void write_metadata(const io::RunConfig& cfg, const std::string& dir) {
  write_file(dir, "metadata.json", [&](std::ostream& out) {
    out << io::metadata_json(cfg).dump(2) << '\n';
  });
}

// Everything the classification tasks share once per-sample votes exist:
// bounds, decisions along the ray, emission, and the alpha sweep.
struct ClassifiedSample {
  ProbBoundPair bounds;
  bool certified = false;  // at the r_max budget
  RadiusCurve curve;       // filled when with_radius
  bool correct = false;
  bool exact = true;
};

inline void classification_outputs(const io::RunConfig& cfg,
                                   const std::vector<io::ClassificationRow>& rows,
                                   const RunOptions& options, bool with_radius,
                                   const std::string& out_dir) {
  const auto& specs = cfg.modalities;
  const AttackBudget top_budget{budget_at(cfg, cfg.r_max)};
  CombinedSpec combined;
  if (cfg.engine == io::Engine::kAblation) {
    require_modification_only(specs);
    combined = combined_from(specs, cfg.ablation_k);
  } else if (!with_radius) {
    // Radius runs walk the ray until it turns infeasible instead.
    validate_budget(specs, top_budget);
  }

  std::vector<ClassifiedSample> done(rows.size());
  parallel_for(rows.size(), options.jobs, [&](std::size_t i) {
    ClassifiedSample& s = done[i];
    s.bounds = clopper_pearson(rows[i].votes, cfg.alpha);
    s.exact = cfg.engine == io::Engine::kAblation ||
              cfg.mode == EvalMode::kExact;
    if (with_radius) {
      s.curve = cfg.engine == io::Engine::kAblation
                    ? ablation_radius_curve(s.bounds, combined, cfg.direction,
                                            specs.size(), cfg.r_max)
                    : certified_radius_curve(s.bounds, specs, cfg.direction,
                                             cfg.r_max, cfg.mode);
      s.certified =
          s.curve.points.size() == static_cast<std::size_t>(cfg.r_max) + 1 &&
          s.curve.points.back().certified;
    } else {
      const auto decision =
          cfg.engine == io::Engine::kAblation
              ? ablation_certify(s.bounds, combined, pool_sum(top_budget.r))
              : certify(s.bounds, specs, top_budget, cfg.mode);
      s.certified = decision.certified;
    }
    s.correct = rows[i].ground_truth.has_value() &&
                *rows[i].ground_truth == s.bounds.label_a;
  });

  std::vector<io::json> out_rows;
  out_rows.reserve(rows.size());
  long robust = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = done[i];
    io::json j;
    j["sample_id"] = rows[i].sample_id;
    if (rows[i].ground_truth) j["gt"] = *rows[i].ground_truth;
    j["prediction"] = s.bounds.label_a;
    j["runner_up"] = s.bounds.label_b;
    j["p_a_lower"] = io::prob_json(s.bounds.p_a_lower);
    j["p_b_upper"] = io::prob_json(s.bounds.p_b_upper);
    j["certified"] = s.certified;
    j["robust"] = s.certified && s.correct;
    j["exact"] = s.exact;
    if (with_radius) {
      j["largest_certified_radius"] = s.curve.largest_certified;
      j["largest_robust_radius"] =
          s.correct ? s.curve.largest_certified : -1;
    }
    if (s.certified && s.correct) ++robust;
    out_rows.push_back(std::move(j));
  }
  write_file(out_dir, "results.jsonl", [&](std::ostream& out) {
    io::write_jsonl(out, out_rows);
  });

  std::vector<io::CurvePoint> curve_points;
  auto r2_of = [&](const std::vector<long>& budget) {
    return budget.size() > 1 ? budget[1] : 0;
  };
  if (with_radius) {
    std::size_t depth = rows.empty() ? 0 : done[0].curve.points.size();
    for (const auto& s : done) depth = std::min(depth, s.curve.points.size());
    for (std::size_t r = 0; r < depth; ++r) {
      long hits = 0;
      for (std::size_t i = 0; i < rows.size(); ++i)
        if (done[i].curve.points[r].certified && done[i].correct) ++hits;
      const auto& budget = done[0].curve.points[r].budget;
      curve_points.push_back(
          {budget[0], r2_of(budget), "certified_accuracy",
           rows.empty() ? 0.0 : static_cast<double>(hits) /
                                    static_cast<double>(rows.size())});
    }
  } else {
    curve_points.push_back(
        {top_budget.r[0], r2_of(top_budget.r), "certified_accuracy",
         rows.empty() ? 0.0 : static_cast<double>(robust) /
                                  static_cast<double>(rows.size())});
  }
  write_file(out_dir, "curves.csv", [&](std::ostream& out) {
    io::write_curves_csv(out, curve_points);
  });

  if (!options.sweep_alpha.empty()) {
    std::vector<io::SweepPoint> sweep;
    for (const double a : options.sweep_alpha) {
      std::vector<std::uint8_t> rob(rows.size(), 0);
      parallel_for(rows.size(), options.jobs, [&](std::size_t i) {
        const auto bounds = clopper_pearson(rows[i].votes, a);
        const bool cert =
            cfg.engine == io::Engine::kAblation
                ? ablation_certify(bounds, combined, pool_sum(top_budget.r))
                      .certified
                : certify(bounds, specs, top_budget, cfg.mode).certified;
        rob[i] = cert && rows[i].ground_truth &&
                 *rows[i].ground_truth == bounds.label_a;
      });
      const long hits = std::accumulate(rob.begin(), rob.end(), 0L);
      sweep.push_back({a, "certified_accuracy",
                       rows.empty() ? 0.0 : static_cast<double>(hits) /
                                                static_cast<double>(rows.size())});
    }
    write_file(out_dir, "curves_alpha.csv", [&](std::ostream& out) {
      io::write_sweep_csv(out, "alpha", sweep);
    });
  }
  write_metadata(cfg, out_dir);
}

inline std::vector<int> ground_truths_of(
    const std::vector<ElementVotes>& elements) {
  std::vector<int> gt;
  gt.reserve(elements.size());
  for (const auto& e : elements) {
    if (!e.ground_truth)
      throw DataError("segmentation metrics need ground truth per element");
    gt.push_back(*e.ground_truth);
  }
  return gt;
}

inline std::vector<ElementCertification> certify_segmentation(
    const io::RunConfig& cfg, const std::vector<ElementVotes>& elements,
    const std::vector<long>& budget, double alpha, int jobs) {
  if (cfg.engine == io::Engine::kAblation) {
    require_modification_only(cfg.modalities);
    const CombinedSpec combined = combined_from(cfg.modalities, cfg.ablation_k);
    return ablation_certify_elements(elements, combined, pool_sum(budget),
                                     alpha, jobs);
  }
  return certify_elements(elements, cfg.modalities, AttackBudget{budget},
                          alpha, cfg.mode, jobs);
}

inline void append_metric_rows(std::vector<io::CurvePoint>& points,
                               const std::vector<long>& budget,
                               const CertifiedMetrics& m) {
  const long r2 = budget.size() > 1 ? budget[1] : 0;
  points.push_back({budget[0], r2, "pixel_acc", m.pixel_accuracy});
  points.push_back({budget[0], r2, "f_score", m.f_score});
  points.push_back({budget[0], r2, "iou", m.iou});
}

// The first modality is the segmented one: its elements carry the labels
// being certified, and its attack budget drives the metric adjustments.
inline CertifiedMetrics segmentation_metrics(
    const io::RunConfig& cfg, const std::vector<ElementCertification>& certs,
    const std::vector<int>& gt, const std::vector<long>& budget) {
  const auto tally = tally_elements(certs, gt);
  if (cfg.engine == io::Engine::kAblation)
    return certified_metrics(tally, AttackType::kModification, 0);
  return certified_metrics(tally, cfg.modalities[0].attack, budget[0]);
}

inline void segmentation_outputs(const io::RunConfig& cfg,
                                 const std::vector<ElementVotes>& elements,
                                 const RunOptions& options,
                                 const std::string& out_dir) {
  const auto gt = ground_truths_of(elements);
  const auto top_budget = budget_at(cfg, cfg.r_max);
  const auto certs =
      certify_segmentation(cfg, elements, top_budget, cfg.alpha, options.jobs);

  std::vector<io::json> out_rows;
  out_rows.reserve(elements.size());
  for (std::size_t i = 0; i < elements.size(); ++i) {
    io::json j;
    j["idx"] = elements[i].index;
    j["gt"] = gt[i];
    j["predicted"] = certs[i].predicted;
    j["alpha_star"] = io::prob_json(certs[i].alpha_star);
    j["stable"] = certs[i].stable;
    j["exact"] = cfg.mode == EvalMode::kExact;
    out_rows.push_back(std::move(j));
  }
  write_file(out_dir, "results.jsonl", [&](std::ostream& out) {
    io::write_jsonl(out, out_rows);
  });

  std::vector<io::CurvePoint> curve_points;
  long pool_total = 0;
  for (const auto& m : cfg.modalities) pool_total += m.n;
  for (long r1 = 0; r1 <= cfg.r_max; ++r1) {
    const auto budget = budget_at(cfg, r1);
    if (cfg.engine == io::Engine::kAblation) {
      if (pool_sum(budget) > pool_total) break;
    } else {
      try {
        validate_budget(cfg.modalities, AttackBudget{budget});
      } catch (const InfeasibleBudgetError&) {
        break;
      }
    }
    const auto certs_r =
        r1 == cfg.r_max
            ? certs
            : certify_segmentation(cfg, elements, budget, cfg.alpha,
                                   options.jobs);
    append_metric_rows(curve_points, budget,
                       segmentation_metrics(cfg, certs_r, gt, budget));
  }
  write_file(out_dir, "curves.csv", [&](std::ostream& out) {
    io::write_curves_csv(out, curve_points);
  });

  if (!options.sweep_alpha.empty()) {
    std::vector<io::SweepPoint> sweep;
    for (const double a : options.sweep_alpha) {
      const auto certs_a =
          certify_segmentation(cfg, elements, top_budget, a, options.jobs);
      const auto m = segmentation_metrics(cfg, certs_a, gt, top_budget);
      sweep.push_back({a, "pixel_acc", m.pixel_accuracy});
      sweep.push_back({a, "f_score", m.f_score});
      sweep.push_back({a, "iou", m.iou});
    }
    write_file(out_dir, "curves_alpha.csv", [&](std::ostream& out) {
      io::write_sweep_csv(out, "alpha", sweep);
    });
  }
  write_metadata(cfg, out_dir);
}

}  // namespace detail_pipe

inline void run_certify(const io::RunConfig& cfg, std::istream& votes,
                        const std::string& out_dir,
                        const RunOptions& options = {}) {
  cfg.validate();
  if (cfg.task != io::Task::kClassification)
    throw ConfigError("certify runs on classification votes; use segment");
  if (!options.sweep_n.empty())
    throw ConfigError("sweep-n regenerates votes; only simulate supports it");
  const auto rows = io::read_classification_votes(votes, cfg.num_classes);
  detail_pipe::classification_outputs(cfg, rows, options, false, out_dir);
}

inline void run_radius(const io::RunConfig& cfg, std::istream& votes,
                       const std::string& out_dir,
                       const RunOptions& options = {}) {
  cfg.validate();
  if (cfg.task != io::Task::kClassification)
    throw ConfigError("radius runs on classification votes; use segment");
  if (!options.sweep_n.empty())
    throw ConfigError("sweep-n regenerates votes; only simulate supports it");
  const auto rows = io::read_classification_votes(votes, cfg.num_classes);
  detail_pipe::classification_outputs(cfg, rows, options, true, out_dir);
}

inline void run_segment(const io::RunConfig& cfg, std::istream& votes,
                        const std::string& out_dir,
                        const RunOptions& options = {}) {
  cfg.validate();
  if (cfg.task != io::Task::kSegmentation)
    throw ConfigError("segment needs a segmentation config");
  if (!options.sweep_n.empty())
    throw ConfigError("sweep-n regenerates votes; only simulate supports it");
  const auto elements =
      io::read_segmentation_votes(votes, cfg.num_classes, cfg.mc_samples);
  detail_pipe::segmentation_outputs(cfg, elements, options, out_dir);
}

// The baseline subcommand is the ablation engine applied to whichever task
// the config names.
inline void run_baseline(const io::RunConfig& cfg, std::istream& votes,
                         const std::string& out_dir,
                         const RunOptions& options = {}) {
  io::RunConfig forced = cfg;
  forced.engine = io::Engine::kAblation;
  if (forced.task == io::Task::kClassification)
    run_certify(forced, votes, out_dir, options);
  else
    run_segment(forced, votes, out_dir, options);
}

inline void run_simulate(const io::RunConfig& cfg, const std::string& out_dir,
                         const RunOptions& options = {}) {
  cfg.validate();
  const auto& specs = cfg.modalities;

  if (cfg.task == io::Task::kSegmentation) {
    if (cfg.engine == io::Engine::kAblation)
      throw ConfigError(
          "synthetic segmentation votes need per-modality subsampling; "
          "run the ablation engine on ingested votes instead");
    if (!options.sweep_n.empty())
      throw ConfigError("sweep-n supports classification simulate only");
    const SegSynthConfig scfg{cfg.synth.base_accuracy, cfg.synth.mark_rate};
    const auto sample = seg_synth_sample(scfg, specs, 0, cfg.seed, 0);
    const auto votes =
        monte_carlo_element_votes(sample, specs, cfg.mc_samples, cfg.seed, 0);
    std::vector<ElementVotes> elements(votes.size());
    std::vector<io::json> vote_rows;
    vote_rows.reserve(votes.size());
    for (std::size_t j = 0; j < votes.size(); ++j) {
      elements[j].index = static_cast<long>(j);
      elements[j].votes = votes[j];
      elements[j].ground_truth = sample.gt[j];
      io::json row;
      row["idx"] = static_cast<long>(j);
      row["gt"] = sample.gt[j];
      row["N"] = votes[j].total;
      io::json counts = io::json::object();
      for (const auto& [label, c] : votes[j].counts)
        if (c > 0) counts[std::to_string(label)] = c;
      row["counts"] = counts;
      vote_rows.push_back(std::move(row));
    }
    detail_pipe::write_file(out_dir, "votes.jsonl", [&](std::ostream& out) {
      io::write_jsonl(out, vote_rows);
    });
    detail_pipe::segmentation_outputs(cfg, elements, options, out_dir);
    return;
  }

  const SynthConfig scfg{cfg.synth.num_samples, cfg.num_classes,
                         cfg.synth.separation};
  CombinedSpec combined;
  if (cfg.engine == io::Engine::kAblation) {
    require_modification_only(specs);
    combined = combined_from(specs, cfg.ablation_k);
  }
  const std::size_t count = static_cast<std::size_t>(cfg.synth.num_samples);
  std::vector<io::ClassificationRow> rows(count);
  parallel_for(count, options.jobs, [&](std::size_t s) {
    const auto sample = synth_sample(scfg, specs, cfg.seed, s);
    const PluralityClassifier clf(sample, cfg.num_classes);
    rows[s].sample_id = "s" + std::to_string(s);
    rows[s].ground_truth = sample.label;
    rows[s].votes =
        cfg.engine == io::Engine::kAblation
            ? ablation_monte_carlo_votes(sample.input, clf, combined,
                                         cfg.num_classes, cfg.mc_samples,
                                         cfg.seed, s)
            : monte_carlo_votes(sample.input, clf, specs, cfg.num_classes,
                                cfg.mc_samples, cfg.seed, s);
  });

  std::vector<io::json> vote_rows;
  vote_rows.reserve(rows.size());
  for (const auto& row : rows) {
    io::json j;
    j["sample_id"] = row.sample_id;
    j["gt"] = *row.ground_truth;
    j["N"] = row.votes.total;
    io::json counts = io::json::object();
    for (const auto& [label, c] : row.votes.counts)
      if (c > 0) counts[std::to_string(label)] = c;
    j["counts"] = counts;
    vote_rows.push_back(std::move(j));
  }
  detail_pipe::write_file(out_dir, "votes.jsonl", [&](std::ostream& out) {
    io::write_jsonl(out, vote_rows);
  });

  detail_pipe::classification_outputs(cfg, rows, options, true, out_dir);

  if (!options.sweep_n.empty()) {
    std::vector<io::SweepPoint> sweep;
    const AttackBudget top_budget{detail_pipe::budget_at(cfg, cfg.r_max)};
    for (const long n : options.sweep_n) {
      if (n < 1) throw ConfigError("sweep-n values must be >= 1");
      std::vector<std::uint8_t> rob(count, 0);
      parallel_for(count, options.jobs, [&](std::size_t s) {
        const auto sample = synth_sample(scfg, specs, cfg.seed, s);
        const PluralityClassifier clf(sample, cfg.num_classes);
        const auto votes =
            cfg.engine == io::Engine::kAblation
                ? ablation_monte_carlo_votes(sample.input, clf, combined,
                                             cfg.num_classes, n, cfg.seed, s)
                : monte_carlo_votes(sample.input, clf, specs, cfg.num_classes,
                                    n, cfg.seed, s);
        const auto bounds = clopper_pearson(votes, cfg.alpha);
        const bool cert =
            cfg.engine == io::Engine::kAblation
                ? ablation_certify(bounds, combined,
                                   detail_pipe::pool_sum(top_budget.r))
                      .certified
                : certify(bounds, specs, top_budget, cfg.mode).certified;
        rob[s] = cert && bounds.label_a == sample.label;
      });
      const long hits = std::accumulate(rob.begin(), rob.end(), 0L);
      sweep.push_back({static_cast<double>(n), "certified_accuracy",
                       static_cast<double>(hits) / static_cast<double>(count)});
    }
    detail_pipe::write_file(out_dir, "curves_n.csv", [&](std::ostream& out) {
      io::write_sweep_csv(out, "n", sweep);
    });
  }
}

// Cross-checks the closed-form engine against brute-force enumeration on
// the configured (necessarily small) geometry. Returns false when the
// enumeration refutes a certificate or the counted terms disagree.
inline bool run_oracle(const io::RunConfig& cfg, const std::string& out_dir,
                       const RunOptions& options = {}) {
  (void)options;
  cfg.validate();
  if (cfg.engine != io::Engine::kMulticert)
    throw ConfigError("the oracle checks the multicert engine");
  const auto budget = detail_pipe::budget_at(cfg, cfg.r_max);
  const auto inst =
      oracle::make_oracle_instance(cfg.modalities, budget, 2, cfg.num_classes);
  const oracle::HashLookupClassifier clf(cfg.seed, cfg.num_classes);

  std::vector<long> ks(cfg.modalities.size());
  std::vector<std::vector<std::uint32_t>> pools(cfg.modalities.size());
  for (std::size_t i = 0; i < pools.size(); ++i) {
    ks[i] = cfg.modalities[i].k;
    pools[i] = inst.original.modalities[i];
  }
  const auto dist =
      oracle::label_distribution(pools, ks, clf, cfg.num_classes);
  long runner = 0;
  for (int c = 0; c < cfg.num_classes; ++c) {
    if (c == dist.top) continue;
    runner = std::max(runner, dist.counts[c]);
  }
  const auto pa = make_ratio(dist.counts[dist.top], dist.total);
  const auto pb = make_ratio(runner, dist.total);
  const auto decision =
      certify(pa, pb, cfg.modalities, AttackBudget{budget}, EvalMode::kExact);

  const auto part =
      oracle::build_partition(inst, oracle::default_placement(budget));
  const CertTerms terms(cfg.modalities, budget);
  const bool counts_match =
      BigNat(part.x_total) == terms.pre_count() &&
      BigNat(part.y_total) == terms.post_count() &&
      BigNat(static_cast<long>(part.shared.size())) == terms.overlap_count();

  const auto res = oracle::exhaustive_certify(inst, clf);
  const bool sound = !(decision.certified && !res.stable);
  const bool ok = counts_match && sound;

  io::json report;
  report["clean_label"] = res.clean_label;
  report["p_a"] = io::prob_json(pa.get_d());
  report["p_b"] = io::prob_json(pb.get_d());
  report["certified"] = decision.certified;
  report["stable_under_enumeration"] = res.stable;
  report["attacked_variants"] = res.variants;
  report["counted_terms_match"] = counts_match;
  report["agreement"] = ok;
  detail_pipe::write_file(out_dir, "oracle.json", [&](std::ostream& out) {
    out << report.dump(2) << '\n';
  });
  detail_pipe::write_metadata(cfg, out_dir);
  return ok;
}

}  // namespace pipeline
}  // namespace multicert
