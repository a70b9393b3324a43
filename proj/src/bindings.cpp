#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "multitime/delta_model.hpp"
#include "multitime/errors.hpp"
#include "multitime/field.hpp"
#include "multitime/holonomy.hpp"
#include "multitime/operator.hpp"
#include "multitime/scenario.hpp"

namespace py = pybind11;
using namespace multitime;

namespace {

SpacetimeConfig make_config(const std::vector<double>& times,
                            const std::vector<Eigen::VectorXd>& positions) {
    if (times.size() != positions.size())
        throw invalid_input_error("times and positions must have the same length");
    SpacetimeConfig q;
    for (std::size_t i = 0; i < times.size(); ++i)
        q.points.push_back({times[i], positions[i]});
    return q;
}

std::vector<std::vector<std::vector<int>>> blocks_of(const std::vector<Partition>& parts) {
    std::vector<std::vector<std::vector<int>>> out;
    for (const Partition& p : parts) out.push_back(p.blocks());
    return out;
}

// Round-trips between Python objects and JSON through the interpreter's own
// json module, so config dicts and manifests cross the boundary untouched.
nlohmann::json to_json(const py::object& obj) {
    const py::object dumps = py::module_::import("json").attr("dumps");
    return nlohmann::json::parse(dumps(obj).cast<std::string>());
}

py::object from_json(const nlohmann::json& j) {
    const py::object loads = py::module_::import("json").attr("loads");
    return loads(py::str(j.dump()));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Multi-time quantum evolution: path-ordered propagators, flatness "
              "diagnostics, and the cutoff multi-time construction.";

    py::register_exception<invalid_input_error>(m, "InvalidInputError", PyExc_ValueError);
    py::register_exception<inconsistent_input_error>(m, "InconsistentInputError",
                                                     PyExc_RuntimeError);
    py::register_exception<integrator_failure_error>(m, "IntegratorFailureError",
                                                     PyExc_RuntimeError);
    py::register_exception<io_error>(m, "IoError", PyExc_OSError);

    // ----------------------------------------------------------- operators
    m.def("operator_norm", &operator_norm, py::arg("a"),
          "Largest singular value of a complex matrix.");
    m.def("commutator", &commutator, py::arg("a"), py::arg("b"), "a @ b - b @ a.");
    m.def(
        "matrix_exp",
        [](const Operator& a, Complex scale) { return matrix_exp(a, scale); },
        py::arg("a"), py::arg("scale") = Complex(1.0, 0.0),
        "exp(scale * a) by scaling and squaring.");
    m.def("pauli_x", &pauli_x);
    m.def("pauli_y", &pauli_y);
    m.def("pauli_z", &pauli_z);

    // ------------------------------------------------------------- fields
    py::class_<HamiltonianField>(m, "HamiltonianField",
                                 "One generator per time variable, each an operator-valued "
                                 "function of the whole time tuple.")
        .def_property_readonly("n_times", &HamiltonianField::n_times)
        .def_property_readonly("dim", &HamiltonianField::dim)
        .def("eval", &HamiltonianField::eval, py::arg("j"), py::arg("t"),
             "Generator j at the time tuple t.");

    m.def("pauli_pair_field", &make_pauli_pair_field,
          "H1 = sigma_x, H2 = sigma_z: constant and noncommuting.");
    m.def("commuting_diagonal_field", &make_commuting_diagonal_field, py::arg("n_times"),
          py::arg("dim"), py::arg("seed"),
          "Constant commuting diagonal generators, deterministic in the seed.");
    m.def(
        "constant_field",
        [](const std::vector<Operator>& hs) {
            if (hs.empty()) throw invalid_input_error("constant_field needs >= 1 generator");
            const int dim = static_cast<int>(hs[0].rows());
            return HamiltonianField(static_cast<int>(hs.size()), dim,
                                    [hs](int j, const TimePoint&) { return hs[static_cast<std::size_t>(j)]; });
        },
        py::arg("generators"), "Constant field from one matrix per time variable.");

    py::class_<TimePath>(m, "TimePath",
                         "Piecewise-linear path through time space; steps[i] integration "
                         "steps on segment i.")
        .def(py::init([](std::vector<TimePoint> vertices, std::vector<int> steps) {
                 TimePath p;
                 p.vertices = std::move(vertices);
                 p.steps = std::move(steps);
                 return p;
             }),
             py::arg("vertices"), py::arg("steps"))
        .def_readwrite("vertices", &TimePath::vertices)
        .def_readwrite("steps", &TimePath::steps);

    m.def("staircase", &make_staircase, py::arg("start"), py::arg("end"),
          py::arg("axis_first"), py::arg("steps_per_segment"),
          "Two-segment axis staircase from start to end.");
    m.def("random_staircase", &make_random_staircase, py::arg("start"), py::arg("end"),
          py::arg("n_corners"), py::arg("steps_per_segment"), py::arg("seed"),
          "Monotone random staircase, deterministic in the seed.");

    // ----------------------------------------------------------- holonomy
    m.def(
        "consistency_residual",
        [](const HamiltonianField& field, const TimePoint& t, double fd_step) {
            const CurvatureReport rep = consistency_residual(field, t, fd_step);
            py::dict out;
            out["n_times"] = rep.n_times;
            out["max_r_norm"] = rep.max_R_norm;
            if (rep.worst_j >= 0) {
                out["worst"] = py::make_tuple(rep.worst_j, rep.worst_k);
                out["worst_r"] = rep.r(rep.worst_j, rep.worst_k);
            } else {
                out["worst"] = py::none();
                out["worst_r"] = py::none();
            }
            Eigen::MatrixXd norms(rep.n_times, rep.n_times);
            for (int j = 0; j < rep.n_times; ++j)
                for (int k = 0; k < rep.n_times; ++k) norms(j, k) = operator_norm(rep.r(j, k));
            out["r_norms"] = norms;
            return out;
        },
        py::arg("field"), py::arg("t"), py::arg("fd_step") = 1e-4,
        "Pairwise flatness residuals at one time tuple.");

    m.def("path_ordered_exp", &path_ordered_exp, py::arg("field"), py::arg("path"),
          "Ordered product of per-step exponentials along the path.");
    m.def("multitime_solve", &multitime_solve, py::arg("field"), py::arg("path"),
          py::arg("phi0"), "Transport of phi0 along the path.");
    m.def("path_independence_gap", &path_independence_gap, py::arg("field"), py::arg("a"),
          py::arg("b"), "Operator-norm gap between two transports sharing endpoints.");

    m.def(
        "rectangle_holonomy",
        [](const HamiltonianField& field, const TimePoint& corner, int axis_j, int axis_k,
           double dt, int steps_per_edge) {
            const RectangleHolonomy h =
                rectangle_holonomy(field, corner, axis_j, axis_k, dt, steps_per_edge);
            py::dict out;
            out["u_westnorth"] = h.u_westnorth;
            out["u_southeast"] = h.u_southeast;
            out["difference"] = h.difference;
            out["loop_minus_identity"] = h.loop_minus_identity;
            return out;
        },
        py::arg("field"), py::arg("corner"), py::arg("axis_j"), py::arg("axis_k"),
        py::arg("dt"), py::arg("steps_per_edge") = 1,
        "Axis-rectangle transports at a corner and their defect.");

    m.def(
        "stokes_gap",
        [](const HamiltonianField& field, const TimePoint& origin, const TimePoint& edge_s,
           const TimePoint& edge_t, int mesh, double fd_step) {
            const StokesReport rep =
                stokes_compare(field, make_affine_patch(origin, edge_s, edge_t), mesh, fd_step);
            py::dict out;
            out["boundary"] = rep.boundary;
            out["surface"] = rep.surface;
            out["gap"] = rep.gap;
            return out;
        },
        py::arg("field"), py::arg("origin"), py::arg("edge_s"), py::arg("edge_t"),
        py::arg("mesh"), py::arg("fd_step") = 1e-4,
        "Boundary transport vs surface-ordered exponential on an affine patch.");

    // ------------------------------------------------- partition geometry
    m.def(
        "is_delta_spacelike",
        [](const std::vector<double>& times, const std::vector<Eigen::VectorXd>& positions,
           double delta, double margin) {
            return is_delta_spacelike(make_config(times, positions), delta, margin);
        },
        py::arg("times"), py::arg("positions"), py::arg("delta"), py::arg("margin") = 0.0,
        "Every pair simultaneous or farther apart than its time gap plus delta.");
    m.def(
        "admissible_partitions",
        [](const std::vector<double>& times, const std::vector<Eigen::VectorXd>& positions,
           double delta) {
            return blocks_of(admissible_partitions(make_config(times, positions), delta));
        },
        py::arg("times"), py::arg("positions"), py::arg("delta"),
        "Blocks of every admissible partition, coarsest first, finest last.");
    m.def(
        "coarsest_partition",
        [](const std::vector<double>& times, const std::vector<Eigen::VectorXd>& positions) {
            return coarsest_partition(make_config(times, positions)).blocks();
        },
        py::arg("times"), py::arg("positions"), "Equal-time blocks of the configuration.");
    m.def(
        "finest_partition",
        [](const std::vector<double>& times, const std::vector<Eigen::VectorXd>& positions,
           double delta) {
            return finest_partition(make_config(times, positions), delta).blocks();
        },
        py::arg("times"), py::arg("positions"), py::arg("delta"),
        "Finest admissible blocks of a delta-spacelike configuration.");

    // ----------------------------------------------------------- scenarios
    m.def("scenario_names", []() { return scenario_names(); },
          "Names of the runnable scenarios.");
    m.def(
        "run_scenario",
        [](const py::object& config, const std::string& output_dir, bool verbose) {
            const nlohmann::json j = to_json(config);
            ScenarioRun run;
            {
                py::gil_scoped_release release;
                run = run_scenario(j, output_dir, verbose);
            }
            py::dict out;
            out["scenario"] = run.scenario;
            out["files"] = run.files;
            out["manifest"] = from_json(run.manifest);
            return out;
        },
        py::arg("config"), py::arg("output_dir"), py::arg("verbose") = false,
        "Run one scenario from a config dict; writes result files plus manifest.json "
        "into output_dir and returns {scenario, files, manifest}.");

    m.attr("__version__") = "0.1.0";
}
