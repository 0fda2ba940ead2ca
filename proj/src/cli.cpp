#include "bodybench/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "bodybench/acceptance.hpp"
#include "bodybench/io.hpp"
#include "bodybench/parallel.hpp"
#include "bodybench/synthgen.hpp"

namespace bodybench {

namespace {

// Usage errors found after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string env_name(const std::string& flag) {
  std::string out = "BODYBENCH_";
  for (char c : flag.substr(2)) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

// Adds --flag with its environment mirror.
template <typename T>
CLI::Option* opt(CLI::App* app, const std::string& flag, T& value, const std::string& help) {
  return app->add_option(flag, value, help)->envname(env_name(flag));
}

CLI::Option* flag(CLI::App* app, const std::string& name, bool& value, const std::string& help) {
  return app->add_flag(name, value, help)->envname(env_name(name));
}

void require_dir(const fs::path& dir, const char* what) {
  if (!fs::is_directory(dir)) throw UsageError(std::string(what) + " directory does not exist: " + dir.string());
}

void require_file(const fs::path& file, const char* what) {
  if (!fs::is_regular_file(file)) throw UsageError(std::string(what) + " file does not exist: " + file.string());
}

struct Common {
  int jobs = default_jobs();
  bool verbose = false;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;

  void log(const std::string& msg) const {
    if (verbose) *err << msg << '\n';
  }
};

// ---- gen ----

struct GenArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::uint64_t model_seed = 1;
  int scenes = 4;
  int scans = 0;
  int scans_per_identity = 1;
  int min_persons = 5;
  int max_persons = 15;
  bool unclothed = false;
  double child_probability = 0.2;
  double landmark_noise_px = 0.0;
  bool submission = false;
  double miss_rate = 0.0;
  double fp_rate = 0.0;
  double noise_mm = 0.0;
  std::string units = "m";
};

void add_gen(CLI::App& app, GenArgs& a) {
  opt(&app, "--out", a.out, "Output directory (must exist)")->required();
  opt(&app, "--seed", a.seed, "Seed for all generated data");
  opt(&app, "--model-seed", a.model_seed, "Seed of the toy body model");
  opt(&app, "--scenes", a.scenes, "Number of scenes")->check(CLI::NonNegativeNumber);
  opt(&app, "--scans", a.scans, "Number of scans")->check(CLI::NonNegativeNumber);
  opt(&app, "--scans-per-identity", a.scans_per_identity, "Scans sharing one body shape")->check(CLI::PositiveNumber);
  opt(&app, "--min-persons", a.min_persons, "Fewest persons per scene");
  opt(&app, "--max-persons", a.max_persons, "Most persons per scene");
  flag(&app, "--unclothed", a.unclothed, "Scans without clothing offsets");
  opt(&app, "--child-probability", a.child_probability, "Share of child identities");
  opt(&app, "--landmark-noise-px", a.landmark_noise_px, "Pixel noise of scan landmarks");
  flag(&app, "--submission", a.submission, "Also write submission.txt: truth degraded by the rates below");
  opt(&app, "--miss-rate", a.miss_rate, "Share of persons dropped from the submission");
  opt(&app, "--fp-rate", a.fp_rate, "Spurious detections per person in the submission");
  opt(&app, "--noise-mm", a.noise_mm, "Per-coordinate noise of submitted joints");
  opt(&app, "--units", a.units, "Submission units")->check(CLI::IsMember({"m", "mm"}));
}

std::string scene_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04d", i);
  return buf;
}

int cmd_gen(const GenArgs& a, const Common& c) {
  const fs::path out(a.out);
  require_dir(out, "output");
  GenSpec spec;
  spec.seed = a.seed;
  spec.num_scenes = a.scenes;
  spec.min_persons = a.min_persons;
  spec.max_persons = a.max_persons;
  spec.clothed = !a.unclothed;
  spec.child_probability = a.child_probability;
  DegradeSpec deg;
  deg.miss_rate = a.miss_rate;
  deg.fp_rate = a.fp_rate;
  deg.noise_mm = a.noise_mm;
  try {
    spec.validate();
    deg.validate();
    if (a.landmark_noise_px < 0) throw ContractError("--landmark-noise-px must be non-negative");
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }

  const BodyModel model = make_toy_model(a.model_seed);
  const CounterRng root(a.seed);

  std::vector<SceneTruth> scenes(static_cast<std::size_t>(a.scenes));
  std::vector<ScenePrediction> subs(scenes.size());
  parallel_for(a.scenes, c.jobs, [&](int i) {
    CounterRng rng = root.substream(0).substream(static_cast<std::uint64_t>(i));
    scenes[static_cast<std::size_t>(i)] = gen_scene(model, spec, rng, scene_name(i));
    if (a.submission) {
      CounterRng srng = root.substream(2).substream(static_cast<std::uint64_t>(i));
      subs[static_cast<std::size_t>(i)] = degrade_predictions(model, scenes[static_cast<std::size_t>(i)], deg, srng);
    }
  });
  for (const auto& s : scenes) {
    write_scene(out / "scenes" / s.name, s);
    c.log("wrote " + s.name + " (" + std::to_string(s.persons.size()) + " persons)");
  }

  const int identities = (a.scans + a.scans_per_identity - 1) / a.scans_per_identity;
  std::vector<std::vector<ScanRecord>> groups(static_cast<std::size_t>(identities));
  parallel_for(identities, c.jobs, [&](int k) {
    CounterRng rng = root.substream(1).substream(static_cast<std::uint64_t>(k));
    const int count = std::min(a.scans_per_identity, a.scans - k * a.scans_per_identity);
    char id[32];
    std::snprintf(id, sizeof id, "subject_%03d", k);
    for (GenScan& g : gen_identity_scans(model, spec, rng, id, count)) {
      ScanRecord rec;
      rec.name = std::string(id) + "_" + std::to_string(groups[static_cast<std::size_t>(k)].size());
      rec.landmarks = synthesize_landmarks(model, g.truth, scan_cameras(g.scan, FitConfig::defaults().num_cameras),
                                           a.landmark_noise_px, rng);
      rec.scan = std::move(g.scan);
      rec.truth = g.truth;
      groups[static_cast<std::size_t>(k)].push_back(std::move(rec));
    }
  });
  for (const auto& g : groups)
    for (const auto& rec : g) {
      write_scan(out, rec);
      c.log("wrote scan " + rec.name);
    }

  if (a.submission)
    write_file(out / "submission.txt",
               format_submission(subs, a.units == "mm" ? Units::kMillimetres : Units::kMetres));

  const Manifest m = build_manifest(out, a.model_seed, a.seed);
  write_manifest(out, m);
  *c.out << "gen: " << scenes.size() << " scenes, " << a.scans << " scans, " << m.entries.size()
         << " files in " << out.string() << '\n';
  return kExitOk;
}

// ---- shared corpus loading ----

Manifest load_manifest(const fs::path& corpus, bool verify) {
  require_dir(corpus, "corpus");
  require_file(corpus / "manifest.txt", "manifest");
  Manifest m = read_manifest(corpus);
  if (verify) {
    const auto bad = verify_manifest(corpus, m);
    if (!bad.empty())
      throw UsageError("corpus does not match its manifest: " + (corpus / bad.front()).string() +
                       (bad.size() > 1 ? " and " + std::to_string(bad.size() - 1) + " more" : ""));
  }
  return m;
}

// ---- fit ----

struct FitArgs {
  std::string corpus;
  std::string out;
  int outer_iterations = -1;
};

void add_fit(CLI::App& app, FitArgs& a) {
  opt(&app, "--corpus", a.corpus, "Corpus directory written by gen")->required();
  opt(&app, "--out", a.out, "Output directory (must exist)")->required();
  opt(&app, "--outer-iterations", a.outer_iterations, "Cap on refinement iterations");
}

struct ScanSummary {
  std::string name;
  std::string identity;
  std::optional<double> skin_mm;
  std::optional<double> penetration_percent;
  std::optional<double> penetration_mm;
  std::optional<double> joint_mm;
  double alpha = 1.0;
};

struct GroupResult {
  std::vector<ScanSummary> scans;
  std::vector<std::pair<std::string, BodyParams>> params;
  std::vector<EnergyBreakdown> energies;
  std::vector<IterationRecord> log;
  std::string error;
};

std::string opt_str(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

int cmd_fit(const FitArgs& a, const Common& c) {
  const fs::path corpus(a.corpus), out(a.out);
  const Manifest manifest = load_manifest(corpus, false);
  require_dir(out, "output");
  const BodyModel model = make_toy_model(manifest.model_seed);
  FitConfig config = FitConfig::defaults();
  if (a.outer_iterations >= 0) config.outer_iterations = a.outer_iterations;
  try {
    config.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }

  const std::vector<std::string> names = list_scans(corpus);
  if (names.empty()) throw UsageError("no scans in corpus: " + (corpus / "scans").string());

  std::vector<std::string> skipped;
  std::map<std::string, std::vector<ScanRecord>> by_identity;
  for (const auto& n : names) {
    try {
      ScanRecord rec = read_scan(corpus, n, model);
      by_identity[rec.scan.identity].push_back(std::move(rec));
    } catch (const FormatError& e) {
      skipped.push_back(n + ": " + e.what());
      c.log("skip " + n + ": " + e.what());
    }
  }

  std::vector<std::string> ids;
  for (const auto& [id, _] : by_identity) ids.push_back(id);
  std::vector<GroupResult> results(ids.size());
  parallel_for(static_cast<int>(ids.size()), c.jobs, [&](int k) {
    const auto& recs = by_identity.at(ids[static_cast<std::size_t>(k)]);
    GroupResult& g = results[static_cast<std::size_t>(k)];
    try {
      std::vector<LabeledScan> scans;
      std::vector<LandmarkSet> lms;
      std::vector<BodyParams> init;
      for (const auto& r : recs) {
        scans.push_back(r.scan);
        lms.push_back(r.landmarks);
        init.push_back(fit_multiview_init(model, r.scan, r.landmarks, config).params);
      }
      const FitResult fr = fit_refine(model, scans, lms, init, config);
      g.log = fr.log;
      for (std::size_t i = 0; i < recs.size(); ++i) {
        const BodyParams& p = fr.scans[i].params;
        const PosedBody posed = forward(model, p);
        const SurfaceIndex surface(posed_mesh(model, posed));
        ScanSummary s;
        s.name = recs[i].name;
        s.identity = recs[i].scan.identity;
        s.skin_mm = skin_error(recs[i].scan, surface);
        const PenetrationError pe = cloth_penetration_error(recs[i].scan, surface);
        s.penetration_percent = pe.percent;
        s.penetration_mm = pe.mean_mm;
        s.alpha = p.alpha;
        if (recs[i].truth) {
          const PosedBody truth = forward(model, *recs[i].truth);
          double worst = 0.0;
          for (int j : model.parts.body_joints)
            worst = std::max(worst, (posed.joints.row(j) - truth.joints.row(j)).norm());
          s.joint_mm = 1000.0 * worst;
        }
        g.scans.push_back(s);
        g.params.emplace_back(recs[i].name, p);
        g.energies.push_back(fr.scans[i].energy);
      }
    } catch (const std::exception& e) {
      g = GroupResult{};
      g.error = e.what();
    }
  });

  fs::create_directories(out / "params");
  std::string conv = "identity,iteration,accepted,landmark,skin,cloth,reg,interbeta,total\n";
  std::string table =
      "scan,identity,skin_error_mm,penetration_percent,penetration_mm,body_joint_error_mm,alpha\n";
  std::vector<ScanSummary> done;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const GroupResult& g = results[k];
    if (!g.error.empty()) {
      for (const auto& r : by_identity.at(ids[k])) skipped.push_back(r.name + ": fit failed: " + g.error);
      continue;
    }
    for (std::size_t i = 0; i < g.params.size(); ++i)
      write_fit_params(out / "params" / (g.params[i].first + ".json"), g.params[i].first, g.params[i].second,
                       g.energies[i]);
    for (const auto& it : g.log) {
      const EnergyBreakdown& e = it.energy;
      conv += ids[k] + "," + std::to_string(it.iteration) + "," + (it.accepted ? "1" : "0") + "," + fmt(e.landmark) +
              "," + fmt(e.skin) + "," + fmt(e.cloth) + "," + fmt(e.reg) + "," + fmt(e.interbeta) + "," +
              fmt(e.total()) + "\n";
    }
    for (const auto& s : g.scans) {
      table += s.name + "," + s.identity + "," + opt_str(s.skin_mm) + "," + opt_str(s.penetration_percent) + "," +
               opt_str(s.penetration_mm) + "," + opt_str(s.joint_mm) + "," + fmt(s.alpha) + "\n";
      done.push_back(s);
    }
  }
  std::sort(skipped.begin(), skipped.end());
  std::string skip_log;
  for (const auto& s : skipped) skip_log += s + "\n";
  write_file(out / "convergence.csv", conv);
  write_file(out / "fit_scans.csv", table);
  write_file(out / "skipped.txt", skip_log);

  auto mean = [&](std::optional<double> ScanSummary::*f) -> nlohmann::json {
    double sum = 0.0;
    int n = 0;
    for (const auto& s : done)
      if (s.*f) {
        sum += *(s.*f);
        ++n;
      }
    return n ? nlohmann::json(sum / n) : nlohmann::json(nullptr);
  };
  const nlohmann::json summary{{"scans_fitted", done.size()},
                               {"scans_skipped", skipped.size()},
                               {"mean_skin_error_mm", mean(&ScanSummary::skin_mm)},
                               {"mean_penetration_percent", mean(&ScanSummary::penetration_percent)},
                               {"mean_penetration_mm", mean(&ScanSummary::penetration_mm)},
                               {"mean_body_joint_error_mm", mean(&ScanSummary::joint_mm)}};
  write_file(out / "fit_summary.json", summary.dump(1) + "\n");
  *c.out << "fit: " << done.size() << " scans fitted, " << skipped.size() << " skipped";
  if (!summary["mean_skin_error_mm"].is_null()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, ", mean skin error %.3f mm", summary["mean_skin_error_mm"].get<double>());
    *c.out << buf;
  }
  *c.out << '\n';
  for (const auto& s : skipped) *c.err << "skipped " << s << '\n';
  if (done.empty()) {
    *c.err << "error: every scan failed\n";
    return kExitUsage;
  }
  return kExitOk;
}

// ---- eval ----

struct EvalArgs {
  std::string corpus;
  std::string submission;
  std::string out;
  double tau = 0.1;
  std::string parts = "B,LH,RH,F";
  int bins = 8;
  int yaw_bins = 12;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  opt(&app, "--corpus", a.corpus, "Corpus directory written by gen")->required();
  opt(&app, "--submission", a.submission, "Submission file")->required();
  opt(&app, "--out", a.out, "Output directory (must exist)")->required();
  opt(&app, "--tau", a.tau, "IoU gate for matching");
  opt(&app, "--parts", a.parts, "Comma-separated parts among B, LH, RH, F");
  opt(&app, "--bins", a.bins, "Centre-distance bins over [0, W/2]")->check(CLI::PositiveNumber);
  opt(&app, "--yaw-bins", a.yaw_bins, "Yaw bins over [0, 180]")->check(CLI::PositiveNumber);
}

std::vector<Part> parse_parts(const std::string& text) {
  std::vector<Part> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    Part p;
    if (tok == "B") {
      p = Part::kBody;
    } else if (tok == "LH") {
      p = Part::kLeftHand;
    } else if (tok == "RH") {
      p = Part::kRightHand;
    } else if (tok == "F") {
      p = Part::kFace;
    } else {
      throw UsageError("unknown part '" + tok + "' in --parts (use B, LH, RH, F)");
    }
    if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  }
  if (out.empty()) throw UsageError("--parts is empty");
  return out;
}

int cmd_eval(const EvalArgs& a, const Common& c) {
  const fs::path corpus(a.corpus), out(a.out);
  if (!(a.tau > 0.0 && a.tau < 1.0)) throw UsageError("--tau must lie in (0, 1)");
  EvalOptions options;
  options.tau = a.tau;
  options.parts = parse_parts(a.parts);
  const Manifest manifest = load_manifest(corpus, true);
  require_file(a.submission, "submission");
  require_dir(out, "output");
  const BodyModel model = make_toy_model(manifest.model_seed);

  const std::vector<std::string> names = list_scenes(corpus);
  std::vector<SceneTruth> scenes(names.size());
  parallel_for(static_cast<int>(names.size()), c.jobs, [&](int i) {
    scenes[static_cast<std::size_t>(i)] = read_scene(corpus / "scenes" / names[static_cast<std::size_t>(i)], model);
  });
  const std::vector<ScenePrediction> preds = parse_submission(read_file(a.submission), model, a.submission);
  std::set<std::string> known(names.begin(), names.end());
  for (const auto& p : preds)
    if (!known.count(p.scene)) throw UsageError(a.submission + ": scene '" + p.scene + "' is not in the corpus");
  if (scenes.empty()) throw UsageError("no scenes in corpus: " + (corpus / "scenes").string());

  const EvalReport rep = evaluate(model, scenes, preds, options);
  write_eval_outputs(out, rep, options, BinSettings{a.bins, a.yaw_bins});
  const DetectionScores& d = rep.detection;
  char line[256];
  std::snprintf(line, sizeof line, "eval: %zu scenes; tp %d fp %d fn %d; F1 %.3f", scenes.size(), d.tp, d.fp, d.fn,
                d.f1);
  *c.out << line;
  if (rep.body.mpjpe) {
    std::snprintf(line, sizeof line, "; B-MPJPE %.1f mm", *rep.body.mpjpe);
    *c.out << line;
  }
  if (rep.body_normalized.nmje) {
    std::snprintf(line, sizeof line, "; NMJE %.1f mm", *rep.body_normalized.nmje);
    *c.out << line;
  }
  *c.out << '\n';
  return kExitOk;
}

// ---- report ----

struct ReportArgs {
  std::vector<std::string> evals;
  std::string out;
};

void add_report(CLI::App& app, ReportArgs& a) {
  app.add_option("evals", a.evals, "Output directories of eval runs")->required()->envname("BODYBENCH_EVALS");
  opt(&app, "--out", a.out, "Directory for plot data (must exist)")->required();
}

std::string cell(const nlohmann::json& j, int width) {
  char buf[32];
  if (j.is_number())
    std::snprintf(buf, sizeof buf, "%*.1f", width, j.get<double>());
  else
    std::snprintf(buf, sizeof buf, "%*s", width, "-");
  return buf;
}

int cmd_report(const ReportArgs& a, const Common& c) {
  require_dir(a.out, "output");
  struct Run {
    std::string label;
    nlohmann::json summary;
  };
  std::vector<Run> runs;
  for (const auto& e : a.evals) {
    const fs::path p = fs::path(e) / "summary.json";
    require_file(p, "eval summary");
    Run r;
    r.label = fs::path(e).lexically_normal().filename().string();
    if (r.label.empty()) r.label = fs::path(e).lexically_normal().parent_path().filename().string();
    try {
      r.summary = nlohmann::json::parse(read_file(p));
      (void)r.summary.at("detection").at("f1");
      (void)r.summary.at("parts").at("B");
      (void)r.summary.at("bins");
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(p.string(), 0, ex.what());
    }
    runs.push_back(std::move(r));
  }

  std::size_t w = 8;
  for (const auto& r : runs) w = std::max(w, r.label.size());
  std::ostream& o = *c.out;
  char head[256];
  std::snprintf(head, sizeof head, "%-*s %6s %6s %6s %8s %8s %8s %8s %8s %8s", static_cast<int>(w), "run", "F1",
                "prec", "recall", "B-MPJPE", "B-MVE", "FB-MPJPE", "NMJE-B", "NMVE-B", "NMJE-FB");
  o << head << '\n';
  for (const auto& r : runs) {
    const auto& d = r.summary["detection"];
    const auto& p = r.summary["parts"];
    char line[256];
    std::snprintf(line, sizeof line, "%-*s %6.3f %6.3f %6.3f", static_cast<int>(w), r.label.c_str(),
                  d["f1"].get<double>(), d["precision"].get<double>(), d["recall"].get<double>());
    o << line << ' ' << cell(p["B"]["mpjpe_mm"], 8) << ' ' << cell(p["B"]["mve_mm"], 8) << ' '
      << cell(p["FB"]["mpjpe_mm"], 8) << ' ' << cell(p["B"]["nmje_mm"], 8) << ' ' << cell(p["B"]["nmve_mm"], 8)
      << ' ' << cell(p["FB"]["nmje_mm"], 8) << '\n';
  }

  auto val = [](const nlohmann::json& j) { return j.is_number() ? fmt(j.get<double>()) : std::string(); };
  for (const char* kind : {"occlusion", "center", "yaw"}) {
    std::string csv = "series,x,lo,hi,count,mean_b_mpjpe_mm,recall_nmje_mm,miss_rate\n";
    for (const auto& r : runs)
      for (const auto& b : r.summary["bins"][kind]) {
        const double lo = b["lo"].get<double>(), hi = b["hi"].get<double>();
        csv += r.label + "," + fmt(0.5 * (lo + hi)) + "," + fmt(lo) + "," + fmt(hi) + "," +
               std::to_string(b["count"].get<int>()) + "," + val(b["mean_b_mpjpe_mm"]) + "," +
               val(b["recall_nmje_mm"]) + "," + val(b["miss_rate"]) + "\n";
      }
    write_file(fs::path(a.out) / (std::string("plot_") + kind + ".csv"), csv);
  }
  return kExitOk;
}

// ---- selftest ----

struct SelftestArgs {
  bool quick = false;
  bool force_fail = false;
  std::vector<int> only;
};

void add_selftest(CLI::App& app, SelftestArgs& a) {
  flag(&app, "--quick", a.quick, "Reduced subset");
  flag(&app, "--force-fail", a.force_fail, "Append a failing check (tests the exit path)");
  opt(&app, "--only", a.only, "Run only these criteria (1-8)")->check(CLI::Range(1, 8));
}

int cmd_selftest(const SelftestArgs& a, const Common& c) {
  AcceptanceOptions options;
  options.quick = a.quick;
  options.force_fail = a.force_fail;
  options.only = a.only;
  options.jobs = c.jobs;
  options.on_result = [&](const CheckResult& r) { *c.out << format_check(r) << std::endl; };
  int failed = 0;
  for (const auto& r : run_acceptance(options)) failed += r.pass ? 0 : 1;
  *c.out << (failed ? std::to_string(failed) + " check(s) failed" : std::string("all checks passed")) << '\n';
  return failed ? kExitInternal : kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic body-fitting and multi-person evaluation benchmark", "bodybench"};
  app.require_subcommand(1);
  Common common;
  common.out = &out;
  common.err = &err;
  app.add_option("--jobs", common.jobs, "Parallel work units (default: hardware threads)")
      ->envname("BODYBENCH_JOBS")
      ->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", common.verbose, "Progress on stderr")->envname("BODYBENCH_VERBOSE");

  GenArgs gen;
  FitArgs fit;
  EvalArgs ev;
  ReportArgs rep;
  SelftestArgs self;
  CLI::App* sgen = app.add_subcommand("gen", "Generate a seeded corpus of scenes and scans");
  CLI::App* sfit = app.add_subcommand("fit", "Fit the body model to every scan of a corpus");
  CLI::App* seval = app.add_subcommand("eval", "Score a submission against a corpus");
  CLI::App* srep = app.add_subcommand("report", "Tabulate eval runs and write plot data");
  CLI::App* sself = app.add_subcommand("selftest", "Run the acceptance checks");
  add_gen(*sgen, gen);
  add_fit(*sfit, fit);
  add_eval(*seval, ev);
  add_report(*srep, rep);
  add_selftest(*sself, self);
  // --jobs and --verbose also work after the subcommand name.
  for (CLI::App* s : {sgen, sfit, seval, srep, sself}) s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    if (e.get_exit_code() == 0) return kExitOk;
    return kExitUsage;
  }

  try {
    if (sgen->parsed()) return cmd_gen(gen, common);
    if (sfit->parsed()) return cmd_fit(fit, common);
    if (seval->parsed()) return cmd_eval(ev, common);
    if (srep->parsed()) return cmd_report(rep, common);
    if (sself->parsed()) return cmd_selftest(self, common);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace bodybench
