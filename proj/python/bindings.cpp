#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "compgen/error.hpp"
#include "compgen/experiments.hpp"
#include "compgen/factorization.hpp"
#include "compgen/io.hpp"
#include "compgen/metrics.hpp"
#include "compgen/probes.hpp"

namespace py = pybind11;
using namespace compgen;

namespace {

std::pair<int, int> as_tuple(const Combo& c) { return {c.c1, c.c2}; }

std::vector<std::pair<int, int>> as_tuples(const std::vector<Combo>& combos) {
    std::vector<std::pair<int, int>> out;
    out.reserve(combos.size());
    for (const auto& c : combos) out.push_back(as_tuple(c));
    return out;
}

EmbeddingTable make_table(const Eigen::MatrixXd& matrix, std::vector<int> c1, std::vector<int> c2, int n) {
    EmbeddingTable t;
    t.matrix = matrix;
    t.labels_c1 = std::move(c1);
    t.labels_c2 = std::move(c2);
    if (n == 0) {
        for (std::size_t i = 0; i < t.labels_c1.size(); ++i)
            n = std::max({n, t.labels_c1[i] + 1, i < t.labels_c2.size() ? t.labels_c2[i] + 1 : 0});
    }
    t.n = n;
    t.validate();
    return t;
}

EmbeddingTable rows_of(const EmbeddingTable& t, const std::vector<Combo>& combos) {
    std::vector<bool> keep(static_cast<std::size_t>(t.rows()), false);
    for (std::size_t r = 0; r < keep.size(); ++r)
        for (const auto& c : combos)
            if (c.c1 == t.labels_c1[r] && c.c2 == t.labels_c2[r]) keep[r] = true;
    return t.subset(keep);
}

// k = 0 uses the full grid; otherwise only the cyclic training combinations.
FactoredModel factorize(const EmbeddingTable& table, int k) {
    if (k == 0) return conditional_vectors(table);
    const NkSplit split = build_nk_split(table.n, k);
    return recover_from_split(joint_embeddings(rows_of(table, split.train_combos), split.train_combos), table.n, k);
}

py::dict row_dict(const ResultRow& r) {
    py::dict d;
    d["experiment"] = r.experiment;
    d["n"] = r.n;
    d["k"] = r.k;
    d["seed"] = r.seed;
    d["dataset_size"] = r.dataset_size;
    d["metric"] = r.metric;
    d["value"] = r.value;
    d["wall_time_s"] = r.wall_time_s;
    return d;
}

py::list row_list(const std::vector<ResultRow>& rows) {
    py::list out;
    for (const auto& r : rows) out.append(row_dict(r));
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "(n,k) compositional splits, linear factorization of embeddings and structure metrics.";

    py::enum_<ErrorCode>(m, "ErrorCode")
        .value("InvalidParameter", ErrorCode::InvalidParameter)
        .value("InvalidInput", ErrorCode::InvalidInput)
        .value("BalanceViolation", ErrorCode::BalanceViolation)
        .value("IncompleteSplit", ErrorCode::IncompleteSplit)
        .value("Unidentifiable", ErrorCode::Unidentifiable)
        .value("InsufficientCombinations", ErrorCode::InsufficientCombinations)
        .value("DegenerateVariance", ErrorCode::DegenerateVariance)
        .value("DegenerateVector", ErrorCode::DegenerateVector)
        .value("TrainingDiverged", ErrorCode::TrainingDiverged)
        .value("IndexOutOfRange", ErrorCode::IndexOutOfRange)
        .value("CorruptFile", ErrorCode::CorruptFile)
        .value("BadMagic", ErrorCode::BadMagic)
        .value("BadVersion", ErrorCode::BadVersion)
        .value("RowCountMismatch", ErrorCode::RowCountMismatch)
        .value("NanEntry", ErrorCode::NanEntry)
        .value("Io", ErrorCode::Io);

    PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
    error_type.call_once_and_store_result([&]() { return py::object(py::exception<Error>(m, "CompgenError")); });
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object instance = error_type.get_stored()(e.what());
            instance.attr("code") = py::cast(e.code());
            PyErr_SetObject(error_type.get_stored().ptr(), instance.ptr());
        }
    });

    py::class_<NkSplit>(m, "NkSplit")
        .def_readonly("n", &NkSplit::n)
        .def_readonly("k", &NkSplit::k)
        .def_property_readonly("train_combos", [](const NkSplit& s) { return as_tuples(s.train_combos); })
        .def_property_readonly("test_combos", [](const NkSplit& s) { return as_tuples(s.test_combos); })
        .def("is_train", [](const NkSplit& s, int i, int j) { return s.is_train({i, j}); })
        .def("to_json", [](const NkSplit& s) { return nlohmann::json(s).dump(); });

    m.def("build_nk_split", &build_nk_split, py::arg("n"), py::arg("k"),
          "Cyclic split: value i of the first concept is seen with values i .. i+k-1 (mod n) of the second.");
    m.def("select_value_indices", &select_value_indices, py::arg("total_values"), py::arg("n"));

    py::class_<EmbeddingTable>(m, "EmbeddingTable")
        .def(py::init(&make_table), py::arg("matrix"), py::arg("labels_c1"), py::arg("labels_c2"), py::arg("n") = 0,
             "n = 0 infers the value count from the largest label.")
        .def_readonly("matrix", &EmbeddingTable::matrix)
        .def_readonly("labels_c1", &EmbeddingTable::labels_c1)
        .def_readonly("labels_c2", &EmbeddingTable::labels_c2)
        .def_readonly("n", &EmbeddingTable::n)
        .def_property_readonly("rows", &EmbeddingTable::rows)
        .def_property_readonly("dim", &EmbeddingTable::dim);

    py::class_<FactoredModel>(m, "FactoredModel")
        .def_readonly("global_mean", &FactoredModel::global_mean)
        .def_readonly("u1", &FactoredModel::u1)
        .def_readonly("u2", &FactoredModel::u2)
        .def_readonly("design_rank", &FactoredModel::design_rank)
        .def_readonly("residual", &FactoredModel::residual)
        .def_property_readonly("n", &FactoredModel::n)
        .def("reconstruct", &reconstruct, py::arg("i"), py::arg("j"))
        .def("classify", [](const FactoredModel& model, const Eigen::VectorXd& x) { return as_tuple(classify(model, x)); })
        .def("to_json", [](const FactoredModel& model) { return nlohmann::json(model).dump(); });

    m.def("conditional_vectors", &conditional_vectors, py::arg("table"));
    m.def("factorize", &factorize, py::arg("table"), py::arg("k") = 0,
          "Concept vectors from the full grid (k = 0) or from the cyclic (n,k) training combinations.");
    m.def(
        "classify_rows",
        [](const FactoredModel& model, const Eigen::MatrixXd& rows, bool projection) {
            return as_tuples(classify_rows(model, rows,
                                           projection ? ClassifierKind::Projection : ClassifierKind::NearestReconstruction));
        },
        py::arg("model"), py::arg("rows"), py::arg("projection") = false);

    m.def("linearity_r2", &linearity_r2, py::arg("table"));
    m.def("orthogonality", &orthogonality, py::arg("model"), py::arg("absolute") = false);
    m.def(
        "decodability",
        [](const EmbeddingTable& table, const EmbeddingTable& heldout, int epochs, std::uint64_t seed) {
            DecodabilityConfig config;
            config.train.epochs = epochs;
            config.train.shuffle_seed = seed;
            config.init_seed = seed;
            const AccuracyPair acc = decodability(table, heldout, config);
            return std::pair{acc.c1, acc.c2};
        },
        py::arg("table"), py::arg("heldout"), py::arg("epochs") = 100, py::arg("seed") = 0);
    m.def(
        "zero_shot_accuracy",
        [](const FactoredModel& model, const EmbeddingTable& test) {
            const auto predictions = classify_rows(model, test.matrix);
            const auto acc = zero_shot_accuracy(predictions, test.labels_c1, test.labels_c2);
            return std::tuple{acc.c1, acc.c2, acc.mean};
        },
        py::arg("model"), py::arg("test"));
    m.def(
        "best_probe",
        [](const EmbeddingTable& train, const EmbeddingTable& test, int epochs, std::uint64_t seed) {
            ProbeSpec spec;
            spec.train.epochs = epochs;
            spec.train.shuffle_seed = seed;
            spec.init_seed = seed;
            const ProbeComparison cmp = best_probe(train, test, spec);
            py::dict out;
            for (const auto& [arch, acc] : cmp.per_arch) out[py::str(to_string(arch))] = acc.mean();
            out["best_arch"] = to_string(cmp.best_arch);
            out["best"] = cmp.best.mean();
            return out;
        },
        py::arg("train"), py::arg("test"), py::arg("epochs") = 100, py::arg("seed") = 0);

    m.def("read_cemb", &io::read_cemb, py::arg("path"));
    m.def("write_cemb", &io::write_cemb, py::arg("path"), py::arg("matrix"));
    m.def("ingest_embeddings", &io::ingest_embeddings, py::arg("matrix_path"), py::arg("labels_path"), py::arg("n") = 0);
    m.def("export_embeddings", &io::export_embeddings, py::arg("table"), py::arg("matrix_path"), py::arg("labels_path"));

    m.def(
        "prop1_point", [](int n, std::uint64_t seed, double noise) { return row_list(prop1_point(n, seed, noise)); },
        py::arg("n"), py::arg("seed"), py::arg("noise") = 0.0);
    m.def(
        "run_experiment",
        [](const std::filesystem::path& config_path, const std::filesystem::path& output_dir, bool single_thread) {
            ExperimentConfig config = load_config(config_path);
            std::ifstream in(config_path);
            const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
            if (!output_dir.empty()) config.output_dir = output_dir;
            config.single_thread = config.single_thread || single_thread;
            std::vector<ResultRow> rows;
            {
                py::gil_scoped_release release;
                rows = run_experiment(config, text);
            }
            return row_list(rows);
        },
        py::arg("config_path"), py::arg("output_dir") = std::filesystem::path{}, py::arg("single_thread") = false);
}
