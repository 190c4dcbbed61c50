#include "vitalhmm/baselines.hpp"
#include "vitalhmm/errors.hpp"
#include "vitalhmm/experiment.hpp"
#include "vitalhmm/features.hpp"
#include "vitalhmm/model_io.hpp"
#include "vitalhmm/synth.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace vitalhmm;

namespace {

std::vector<double> to_vector(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Frame frame_from(const RowMatrix& data) {
  if (data.rows() != kFrameLength || data.cols() != kChannelCount) {
    throw ContractError("a frame is a 1200 x 3 array");
  }
  Frame f;
  f.data = data;
  return f;
}

py::dict corpus_to_python(const SynthCorpus& corpus) {
  py::list recordings;
  for (const auto& r : corpus.recordings) {
    recordings.append(py::make_tuple(r.patient_id, r.start_epoch, r.samples));
  }
  py::list events;
  for (const auto& e : corpus.events) {
    events.append(py::make_tuple(e.patient_id, e.event_epoch, std::string(to_string(e.kind))));
  }
  py::dict out;
  out["recordings"] = recordings;
  out["events"] = events;
  return out;
}

}  // namespace

PYBIND11_MODULE(_vitalhmm, m) {
  m.doc() = "HMM sequence classifiers for multichannel vital-sign frames.";

  static py::exception<Error> error(m, "VitalHmmError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, ("[" + std::string(e.category()) + "] " + e.what()).c_str());
    }
  });

  m.def("synth_generate", [](const std::string& spec_json, std::uint64_t seed) {
    return corpus_to_python(synth_generate(synth_spec_from_json(nlohmann::json::parse(spec_json)), seed));
  }, py::arg("spec_json"), py::arg("seed"));

  m.def("segment_count", [](const RowMatrix& samples) {
    Recording r;
    r.samples = samples;
    return segment(r).size();
  }, py::arg("samples"), "Number of clean 1200-row frames in an L x 3 recording.");

  m.def("sample_asymmetry", [](const std::vector<double>& x) { return sample_asymmetry(x); });
  m.def("lagged_correlation_range", [](const std::vector<double>& a, const std::vector<double>& b, int max_lag) {
    const auto r = lagged_correlation_range(a, b, max_lag);
    return py::make_tuple(r.min, r.max);
  }, py::arg("a"), py::arg("b"), py::arg("max_lag") = kPopsMaxLag);
  m.def("hrci", [](const RowMatrix& frame) { return to_vector(hrci(frame_from(frame)).values); });
  m.def("pops", [](const RowMatrix& frame) { return to_vector(pops(frame_from(frame)).values); });

  m.def("forward_loglik", [](const std::string& model_json, const RowMatrix& seq) {
    return forward_loglik(hmm_from_json(nlohmann::json::parse(model_json)), seq);
  }, py::arg("model_json"), py::arg("sequence"));
  m.def("viterbi_decode", [](const std::string& model_json, const RowMatrix& seq) {
    return viterbi_decode(hmm_from_json(nlohmann::json::parse(model_json)), seq);
  }, py::arg("model_json"), py::arg("sequence"));
  m.def("default_synth_model", [](int label, double separation) {
    return hmm_to_json(default_synth_model(label, separation)).dump();
  }, py::arg("label"), py::arg("separation") = 1.0);

  m.def("logreg_fit", [](const Matrix& X, const std::vector<int>& y, double lambda) {
    const auto model = logreg_fit(X, y, lambda);
    return py::make_tuple(model.weights, model.bias);
  }, py::arg("X"), py::arg("y"), py::arg("lam"));

  m.def("run_sweep", [](const std::string& config_json) {
    const auto cfg = experiment_config_from_json(nlohmann::json::parse(config_json));
    ExperimentOutput out;
    {
      py::gil_scoped_release release;
      out = run_experiment(cfg);
    }
    return render_csv(out.table);
  }, py::arg("config_json"), "Runs a sweep in memory and returns the CSV result table.");
  m.def("render_markdown", [](const std::string& csv) { return render_markdown(parse_csv(csv)); });
}
