// Python bindings: beliefs and filter updates, simulation, event
// extraction, fleet learning, estimation and evaluation.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lanequest/anchor_store.hpp"
#include "lanequest/config.hpp"
#include "lanequest/error.hpp"
#include "lanequest/evaluation.hpp"
#include "lanequest/formats.hpp"
#include "lanequest/lane_filter.hpp"
#include "lanequest/pipeline.hpp"
#include "lanequest/simulator.hpp"

namespace py = pybind11;
using namespace lanequest;

namespace {

MotionKind motion_kind(const std::string& s) {
  if (s == "left") return MotionKind::LeftChange;
  if (s == "right") return MotionKind::RightChange;
  throw DomainError("direction must be 'left' or 'right', got '" + s + "'");
}

const char* source_name(UpdateSource s) {
  switch (s) {
    case UpdateSource::Init: return "init";
    case UpdateSource::Motion: return "motion";
    case UpdateSource::Perception: return "perception";
    case UpdateSource::Segment: return "segment";
  }
  return "";
}

py::dict tally_dict(const Tally& t) {
  py::dict d;
  d["total"] = t.total();
  d["exact"] = t.exact();
  d["within_one"] = t.within_one();
  d["cdf"] = t.cdf();
  return d;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["all"] = tally_dict(r.all);
  d["steady"] = tally_dict(r.steady);
  d["timed"] = tally_dict(r.timed);
  d["timed_steady"] = tally_dict(r.timed_steady);
  d["transient_s"] = r.transient_s;
  d["trips"] = r.trips;
  return d;
}

PipelineConfig config_from(const std::string& text) {
  PipelineConfig cfg;
  apply_config_text(text, cfg);
  return cfg;
}

double trace_end(const DriveTrace& t) { return t.samples.empty() ? 0.0 : t.samples.back().t; }

}  // namespace

PYBIND11_MODULE(_lanequest, m) {
  m.doc() = "Lane-level positioning from phone sensors";

  static py::exception<Error> base(m, "Error", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  // Filter primitives on plain probability lists.
  m.def("init_belief", [](int n) { return init_belief(n).vector(); }, py::arg("lanes"));
  m.def(
      "motion_update",
      [](const std::vector<double>& belief, const std::string& direction, bool calibrated) {
        const auto c = calibrated ? MotionConfusion::calibrated() : MotionConfusion::perfect();
        return motion_update(LaneBelief(belief), motion_kind(direction), c).vector();
      },
      py::arg("belief"), py::arg("direction"), py::arg("calibrated") = true,
      "Belief after a detected lane change ('left' or 'right').");
  m.def(
      "perception_update",
      [](const std::vector<double>& belief, const std::vector<double>& anchor, double sigma) {
        const auto r = perception_update(LaneBelief(belief), anchor, sigma);
        return py::make_tuple(r.belief.vector(), r.mismatch);
      },
      py::arg("belief"), py::arg("anchor"), py::arg("sigma"),
      "Returns (posterior, mismatch); on mismatch the prior comes back unchanged.");
  m.def("complement_distribution", &complement_distribution, py::arg("distribution"));
  m.def("estimate_sigma_mad", &estimate_sigma_mad, py::arg("residuals"));
  m.def("estimate_curve_radius", &estimate_curve_radius, py::arg("accel"), py::arg("omega"),
        py::arg("omega_min") = 0.02);

  py::class_<Scenario>(m, "Scenario")
      .def_static("parse", &parse_scenario_text, py::arg("text"))
      .def_static("load", &parse_scenario, py::arg("path"))
      .def("format", &format_scenario)
      .def_readwrite("seed", &Scenario::seed)
      .def_readwrite("lanes", &Scenario::lanes)
      .def_readwrite("speed", &Scenario::speed);

  py::class_<RoadMap>(m, "RoadMap")
      .def(py::init<>())
      .def_static("parse", &parse_map_text, py::arg("text"))
      .def("format", &format_map)
      .def_property_readonly("segment_ids", [](const RoadMap& r) {
        std::vector<std::string> ids;
        for (const auto& s : r.segments()) ids.push_back(s.id);
        return ids;
      });
  m.def("build_map", &build_map, py::arg("scenario"));

  py::class_<DriveTrace>(m, "DriveTrace")
      .def(py::init<>())
      .def_static("parse", &parse_trace_text, py::arg("text"))
      .def("format", &format_trace)
      .def_property_readonly("sample_count", [](const DriveTrace& t) { return t.samples.size(); })
      .def_property_readonly("fix_count", [](const DriveTrace& t) { return t.fixes.size(); })
      .def_property_readonly("t_end", &trace_end)
      .def_property_readonly("labels", [](const DriveTrace& t) {
        std::vector<std::pair<double, int>> out;
        for (const auto& l : t.ground_truth) out.emplace_back(l.t, l.lane);
        return out;
      });

  py::class_<SimTrip>(m, "SimTrip")
      .def_readonly("trace", &SimTrip::trace)
      .def_property_readonly("ledger", [](const SimTrip& t) { return format_ledger(t.truth); });
  m.def(
      "simulate", [](const Scenario& s, std::optional<std::uint64_t> seed) { return seed ? simulate(s, *seed) : simulate(s); },
      py::arg("scenario"), py::arg("seed") = py::none());
  m.def("trip_seed", &trip_seed, py::arg("fleet_seed"), py::arg("index"));
  m.def("generate_fleet", &generate_fleet, py::arg("scenario"), py::arg("trips"), py::arg("seed"));

  py::class_<TripEvents>(m, "TripEvents")
      .def_static("parse", &parse_events_text, py::arg("text"))
      .def("format", [](const TripEvents& t) { return format_events(t); })
      .def_readonly("initial_lanes", &TripEvents::initial_lanes)
      .def_readonly("t_start", &TripEvents::t_start)
      .def("__len__", [](const TripEvents& t) { return t.events.size(); })
      .def_property_readonly("kinds", [](const TripEvents& t) {
        std::vector<std::string> out;
        for (const auto& e : t.events) out.push_back(detection_class(e));
        return out;
      });
  m.def(
      "extract_events",
      [](const DriveTrace& trace, const RoadMap& map, const std::string& config, std::uint32_t trip) {
        return extract_events(trace, map, config_from(config), trip);
      },
      py::arg("trace"), py::arg("map"), py::arg("config") = "", py::arg("trip") = 0,
      "Detected events of one trace; `config` is `key = value` text.");
  m.def(
      "subsample_events",
      [](const TripEvents& trip, double rate, double duration, std::uint64_t seed) {
        TripEvents out = trip;
        out.events = subsample_events(trip.events, rate, duration, seed);
        return out;
      },
      py::arg("events"), py::arg("rate_per_hour"), py::arg("duration_s"), py::arg("seed"));

  py::class_<AnchorStore>(m, "AnchorStore")
      .def(py::init<>())
      .def_static("parse", &parse_anchors_text, py::arg("text"))
      .def_static("load", &load_anchors, py::arg("path"))
      .def("save", [](const AnchorStore& s, const std::string& path) { save_anchors(s, path); }, py::arg("path"))
      .def("format", &format_anchors)
      .def("__len__", &AnchorStore::size)
      .def("kinds", [](const AnchorStore& s) {
        std::vector<std::string> out;
        for (const Anchor* a : s.all()) out.emplace_back(to_string(a->kind));
        return out;
      });
  m.def(
      "learn_fleet",
      [](std::vector<TripEvents> trips, const std::string& config) {
        return learn_fleet(trips, config_from(config)).store;
      },
      py::arg("trips"), py::arg("config") = "");

  m.def(
      "estimate_trip",
      [](const TripEvents& trip, const AnchorStore& store, const std::string& config) {
        std::vector<py::dict> out;
        for (const auto& e : estimate_trip(trip, store, config_from(config).filter).estimates) {
          py::dict d;
          d["t"] = e.t;
          d["lane"] = e.lane;
          d["belief"] = e.belief.vector();
          d["source"] = source_name(e.source);
          out.push_back(std::move(d));
        }
        return out;
      },
      py::arg("events"), py::arg("store"), py::arg("config") = "",
      "Lane estimates, one dict per filter update.");
  m.def(
      "evaluate",
      [](const TripEvents& trip, const AnchorStore& store, const DriveTrace& trace, const std::string& config) {
        const auto run = estimate_trip(trip, store, config_from(config).filter);
        return report_dict(evaluate(run.estimates, trace.ground_truth, trace_end(trace)));
      },
      py::arg("events"), py::arg("store"), py::arg("trace"), py::arg("config") = "",
      "Runs the filter and scores it against the trace's ground truth.");
  m.def("config_keys", &config_keys);
  m.def("default_config", [] { return format_config(PipelineConfig{}); });
}
