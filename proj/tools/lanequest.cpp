// lanequest: simulate drives, detect lane events, learn anchors, estimate
// lanes and score the result. Run `lanequest --help` for the subcommands.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lanequest/config.hpp"
#include "lanequest/error.hpp"
#include "lanequest/evaluation.hpp"
#include "lanequest/formats.hpp"
#include "lanequest/pipeline.hpp"
#include "lanequest/simulator.hpp"
#include "lanequest/text.hpp"

namespace fs = std::filesystem;
using namespace lanequest;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = ".";
  bool phone_frame = false;
};

PipelineConfig make_config(const Globals& g) {
  PipelineConfig cfg = g.config.empty() ? PipelineConfig{} : load_config(g.config);
  if (g.phone_frame) cfg.phone_frame = true;
  return cfg;
}

std::string out_path(const Globals& g, const std::string& name) {
  fs::create_directories(g.out);
  return (fs::path(g.out) / name).string();
}

std::string stem_of(const std::string& path) {
  std::string s = fs::path(path).filename().string();
  const auto dot = s.find('.');
  return dot == std::string::npos ? s : s.substr(0, dot);
}

void require_pairs(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ValidationError(std::string(what) + ": file lists differ in length");
}

std::string trip_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "trip-%03zu", i);
  return buf;
}

// ------------------------------------------------------------- anchors JSON

nlohmann::json anchors_to_json(const AnchorStore& store) {
  nlohmann::json j;
  j["format"] = "lanequest-anchors";
  j["version"] = 1;
  j["sigmas"] = nlohmann::json::object();
  for (const auto& [k, v] : store.sigmas()) j["sigmas"][k] = v;
  j["anchors"] = nlohmann::json::array();
  for (const Anchor* a : store.all()) {
    j["anchors"].push_back({{"id", a->id},
                            {"kind", std::string(to_string(a->kind))},
                            {"lat", a->centroid.lat},
                            {"lon", a->centroid.lon},
                            {"lane_distribution", a->lane_distribution},
                            {"feature_mean", a->feature_mean},
                            {"feature_spread", a->feature_spread},
                            {"support", a->support_count}});
  }
  return j;
}

AnchorStore anchors_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "lanequest-anchors" || j.value("version", 0) != 1)
    throw ValidationError("not a lanequest-anchors v1 document");
  AnchorStore store;
  for (const auto& [k, v] : j.at("sigmas").items()) store.set_sigma(k, v.get<double>());
  for (const auto& a : j.at("anchors")) {
    Anchor x;
    x.id = a.at("id").get<std::string>();
    const auto kind = anchor_kind_from_string(a.at("kind").get<std::string>());
    if (!kind) throw ValidationError("anchor '" + x.id + "': unknown kind");
    x.kind = *kind;
    x.centroid = {a.at("lat").get<double>(), a.at("lon").get<double>()};
    x.lane_distribution = a.at("lane_distribution").get<std::vector<double>>();
    x.feature_mean = a.value("feature_mean", 0.0);
    x.feature_spread = a.value("feature_spread", 0.0);
    x.support_count = a.value("support", 0);
    store.insert(std::move(x));
  }
  return store;
}

// ------------------------------------------------------------- subcommands

void cmd_simulate(const Globals& g, const std::string& scenario, std::size_t trips) {
  const Scenario s = parse_scenario(scenario);
  const std::uint64_t seed = g.seed.value_or(s.seed);
  write_map(build_map(s), out_path(g, "map.txt"));
  for (std::size_t i = 0; i < trips; ++i) {
    const SimTrip t = simulate(s, trip_seed(seed, i));
    write_trace(t.trace, out_path(g, trip_name(i) + ".trace"));
    text::write_file(out_path(g, trip_name(i) + ".ledger"), format_ledger(t.truth));
  }
}

void cmd_preprocess(const Globals& g, const std::vector<std::string>& traces) {
  const PipelineConfig cfg = make_config(g);
  for (const auto& path : traces) {
    DriveTrace t = parse_trace(path);
    if (cfg.phone_frame) t.samples = reorient_to_car_frame(t.samples, cfg.reorient);
    t.samples = smooth_samples(t.samples, cfg.smoothing_window_s);
    write_trace(t, out_path(g, stem_of(path) + ".smooth.trace"));
  }
}

void cmd_detect(const Globals& g, const std::string& map_path, const std::vector<std::string>& traces) {
  const PipelineConfig cfg = make_config(g);
  const RoadMap map = parse_map(map_path);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const DriveTrace t = parse_trace(traces[i]);
    const TripEvents ev = extract_events(t, map, cfg, static_cast<std::uint32_t>(i));
    save_events(ev, out_path(g, stem_of(traces[i]) + ".events"), t.fixes);
  }
}

void cmd_learn(const Globals& g, const std::vector<std::string>& events) {
  const PipelineConfig cfg = make_config(g);
  std::vector<TripEvents> trips;
  for (const auto& p : events) trips.push_back(load_events(p));
  const FleetModel model = learn_fleet(trips, cfg);
  save_anchors(model.store, out_path(g, "anchors.txt"));

  std::string csv = "id,kind,support,lanes,max_probability,observations_to_converge\n";
  for (const auto& la : model.learned.anchors) {
    std::size_t settle = 0;  // first k after which successive TV stays below 0.05
    for (std::size_t k = la.convergence.size(); k-- > 0;)
      if (la.convergence[k] >= 0.05) {
        settle = k + 1;
        break;
      }
    const auto& d = la.anchor.lane_distribution;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%s,%d,%zu,%.6f,%zu\n", la.anchor.id.c_str(),
                  std::string(to_string(la.anchor.kind)).c_str(), la.anchor.support_count, d.size(),
                  *std::max_element(d.begin(), d.end()), settle + 1);
    csv += buf;
  }
  text::write_file(out_path(g, "learn.csv"), csv);
}

AnchorStore maybe_anchors(const std::string& path) { return path.empty() ? AnchorStore{} : load_anchors(path); }

void cmd_estimate(const Globals& g, const std::vector<std::string>& events, const std::string& anchors) {
  const PipelineConfig cfg = make_config(g);
  const AnchorStore store = maybe_anchors(anchors);
  for (const auto& p : events) {
    const FilterRun run = estimate_trip(load_events(p), store, cfg.filter);
    save_estimates(run.estimates, out_path(g, stem_of(p) + ".estimates"));
  }
}

double trace_end(const DriveTrace& t) {
  double end = 0.0;
  if (!t.samples.empty()) end = std::max(end, t.samples.back().t);
  if (!t.fixes.empty()) end = std::max(end, t.fixes.back().t);
  return end;
}

void write_reports(const Globals& g, const EvalReport& report) {
  text::write_file(out_path(g, "report.csv"), format_report_csv(report));
  text::write_file(out_path(g, "cdf.csv"), format_cdf_csv(report));
  const nlohmann::json j = {{"trips", report.trips},
                            {"exact", report.all.exact()},
                            {"within_one", report.all.within_one()},
                            {"steady_exact", report.steady.exact()},
                            {"timed_exact", report.timed.exact()},
                            {"timed_within_one", report.timed.within_one()},
                            {"timed_steady_exact", report.timed_steady.exact()},
                            {"transient_s", report.transient_s}};
  text::write_file(out_path(g, "report.json"), j.dump(2) + "\n");
}

void cmd_evaluate(const Globals& g, const std::vector<std::string>& estimates, const std::vector<std::string>& traces,
                  const std::vector<std::string>& events, const std::vector<std::string>& ledgers) {
  require_pairs(estimates.size(), traces.size(), "--estimates/--trace");
  EvalReport report;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const DriveTrace t = parse_trace(traces[i]);
    if (t.ground_truth.empty()) throw EvaluationError(traces[i] + ": trace has no ground-truth labels");
    report.merge(evaluate(load_estimates(estimates[i]), t.ground_truth, trace_end(t)));
  }
  write_reports(g, report);
  if (!ledgers.empty()) {
    require_pairs(events.size(), ledgers.size(), "--events/--ledger");
    std::map<std::string, ClassScore> scores;
    for (std::size_t i = 0; i < events.size(); ++i)
      merge_scores(scores, score_detections(load_events(events[i]).events, load_ledger(ledgers[i])));
    text::write_file(out_path(g, "detections.csv"), format_detections_csv(scores));
  }
}

std::vector<SweepPoint> run_sweep(std::span<const TripEvents> trips, std::span<const DriveTrace> traces,
                                  const AnchorStore& store, const FilterConfig& cfg, std::span<const double> rates,
                                  std::uint64_t seed) {
  std::vector<SweepPoint> out;
  for (double rate : rates) {
    SweepPoint p{rate, {}};
    for (std::size_t i = 0; i < trips.size(); ++i) {
      const double end = trace_end(traces[i]);
      TripEvents sub = trips[i];
      sub.events = subsample_events(trips[i].events, rate, end - trips[i].t_start, seed + i);
      p.report.merge(evaluate(estimate_trip(sub, store, cfg).estimates, traces[i].ground_truth, end));
    }
    out.push_back(std::move(p));
  }
  return out;
}

void cmd_sweep(const Globals& g, const std::vector<std::string>& events, const std::vector<std::string>& traces,
               const std::string& anchors, const std::vector<double>& rates) {
  require_pairs(events.size(), traces.size(), "--events/--trace");
  const PipelineConfig cfg = make_config(g);
  std::vector<TripEvents> trips;
  std::vector<DriveTrace> tr;
  for (std::size_t i = 0; i < events.size(); ++i) {
    trips.push_back(load_events(events[i]));
    tr.push_back(parse_trace(traces[i]));
  }
  const auto points = run_sweep(trips, tr, maybe_anchors(anchors), cfg.filter, rates, g.seed.value_or(1));
  text::write_file(out_path(g, "sweep.csv"), format_sweep_csv(points));
}

void cmd_pipeline(const Globals& g, const std::string& scenario, std::size_t trips, const std::vector<double>& rates) {
  const PipelineConfig cfg = make_config(g);
  const Scenario s = parse_scenario(scenario);
  const std::uint64_t seed = g.seed.value_or(s.seed);
  const RoadMap map = build_map(s);
  write_map(map, out_path(g, "map.txt"));

  std::vector<TripEvents> evs;
  std::vector<DriveTrace> traces;
  std::map<std::string, ClassScore> scores;
  for (std::size_t i = 0; i < trips; ++i) {
    SimTrip t = simulate(s, trip_seed(seed, i));
    write_trace(t.trace, out_path(g, trip_name(i) + ".trace"));
    text::write_file(out_path(g, trip_name(i) + ".ledger"), format_ledger(t.truth));
    evs.push_back(extract_events(t.trace, map, cfg, static_cast<std::uint32_t>(i)));
    merge_scores(scores, score_detections(evs.back().events, t.truth.ledger));
    // Samples are not needed past this point.
    t.trace.samples = {t.trace.samples.front(), t.trace.samples.back()};
    traces.push_back(std::move(t.trace));
  }
  const FleetModel model = learn_fleet(evs, cfg);
  save_anchors(model.store, out_path(g, "anchors.txt"));

  EvalReport report;
  for (std::size_t i = 0; i < trips; ++i) {
    save_events(evs[i], out_path(g, trip_name(i) + ".events"), traces[i].fixes);
    const FilterRun run = estimate_trip(evs[i], model.store, cfg.filter);
    save_estimates(run.estimates, out_path(g, trip_name(i) + ".estimates"));
    report.merge(evaluate(run.estimates, traces[i].ground_truth, trace_end(traces[i])));
  }
  write_reports(g, report);
  text::write_file(out_path(g, "detections.csv"), format_detections_csv(scores));
  if (!rates.empty())
    text::write_file(out_path(g, "sweep.csv"),
                     format_sweep_csv(run_sweep(evs, traces, model.store, cfg.filter, rates, seed)));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lane-level positioning from phone sensors: simulate, detect, learn, estimate, evaluate."};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "RNG seed (fleet seed for simulate/pipeline, sub-sampling seed for sweep)");
  app.add_option("--config", g.config, "flat key = value parameter file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_flag("--phone-frame", g.phone_frame, "input samples are in the phone frame; reorient first");

  std::string scenario, map, anchors, json;
  std::size_t trips = 1;
  std::vector<std::string> traces, events, estimates, ledgers;
  std::vector<double> rates{5, 10, 30, 60, 120};

  auto* sim = app.add_subcommand("simulate", "simulate trips of a scenario: map.txt, trip-NNN.trace/.ledger");
  sim->add_option("--scenario", scenario, "scenario file")->required()->check(CLI::ExistingFile);
  sim->add_option("--trips", trips, "number of trips")->check(CLI::PositiveNumber)->capture_default_str();

  auto* pre = app.add_subcommand("preprocess", "reorient (with --phone-frame) and smooth traces");
  pre->add_option("--trace", traces, "trace files")->required()->check(CLI::ExistingFile);

  auto* det = app.add_subcommand("detect", "write <stem>.events for each trace");
  det->add_option("--map", map, "road map")->required()->check(CLI::ExistingFile);
  det->add_option("--trace", traces, "trace files")->required()->check(CLI::ExistingFile);

  auto* learn = app.add_subcommand("learn", "learn anchors.txt and learn.csv from event files");
  learn->add_option("--events", events, "event files")->required()->check(CLI::ExistingFile);

  auto* est = app.add_subcommand("estimate", "run the lane filter: <stem>.estimates per event file");
  est->add_option("--events", events, "event files")->required()->check(CLI::ExistingFile);
  est->add_option("--anchors", anchors, "anchor repository")->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("evaluate", "score estimates against labelled traces");
  ev->add_option("--estimates", estimates, "estimate files")->required()->check(CLI::ExistingFile);
  ev->add_option("--trace", traces, "labelled traces, same order")->required()->check(CLI::ExistingFile);
  ev->add_option("--events", events, "event files for detection scores")->check(CLI::ExistingFile);
  ev->add_option("--ledger", ledgers, "simulator ledgers, same order as --events")->check(CLI::ExistingFile);

  auto* sw = app.add_subcommand("sweep", "accuracy against anchor observation rate");
  sw->add_option("--events", events, "event files")->required()->check(CLI::ExistingFile);
  sw->add_option("--trace", traces, "labelled traces, same order")->required()->check(CLI::ExistingFile);
  sw->add_option("--anchors", anchors, "anchor repository")->check(CLI::ExistingFile);
  sw->add_option("--rates", rates, "observations per hour")->check(CLI::PositiveNumber)->capture_default_str();

  auto* anc = app.add_subcommand("anchors", "convert the anchor repository to and from JSON");
  anc->require_subcommand(1);
  auto* exp = anc->add_subcommand("export", "anchors.txt to JSON");
  exp->add_option("--anchors", anchors, "anchor repository")->required()->check(CLI::ExistingFile);
  exp->add_option("--json", json, "output JSON (default <out>/anchors.json)");
  auto* imp = anc->add_subcommand("import", "JSON to <out>/anchors.txt");
  imp->add_option("--json", json, "input JSON")->required()->check(CLI::ExistingFile);

  auto* pipe = app.add_subcommand("pipeline", "simulate, detect, learn, estimate, evaluate and sweep in one go");
  pipe->add_option("--scenario", scenario, "scenario file")->required()->check(CLI::ExistingFile);
  pipe->add_option("--trips", trips, "number of trips")->check(CLI::PositiveNumber)->capture_default_str();
  pipe->add_option("--rates", rates, "sweep rates per hour")->check(CLI::PositiveNumber)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*sim) cmd_simulate(g, scenario, trips);
    if (*pre) cmd_preprocess(g, traces);
    if (*det) cmd_detect(g, map, traces);
    if (*learn) cmd_learn(g, events);
    if (*est) cmd_estimate(g, events, anchors);
    if (*ev) cmd_evaluate(g, estimates, traces, events, ledgers);
    if (*sw) cmd_sweep(g, events, traces, anchors, rates);
    if (*exp) {
      const std::string path = json.empty() ? out_path(g, "anchors.json") : json;
      text::write_file(path, anchors_to_json(load_anchors(anchors)).dump(2) + "\n");
    }
    if (*imp) save_anchors(anchors_from_json(nlohmann::json::parse(text::read_file(json))), out_path(g, "anchors.txt"));
    if (*pipe) cmd_pipeline(g, scenario, trips, rates);
  } catch (const std::exception& e) {
    std::cerr << "lanequest: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
