// Python bindings. Genomes, configs and results cross the boundary as plain
// dicts with the same layout as the JSON files the CLI reads and writes.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ihanas/genome.hpp"
#include "ihanas/hwcost.hpp"
#include "ihanas/iha_ref.hpp"
#include "ihanas/metrics.hpp"
#include "ihanas/search.hpp"
#include "ihanas/surrogate.hpp"

namespace py = pybind11;
using namespace ihanas;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::handle& o) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

ArchGenome genome_of(const py::handle& o) { return genome_from_json(from_py(o)); }

py::dict metrics_dict(const HwMetrics& m) {
    py::dict d;
    d["e_tok_uj"] = m.e_tok_uj;
    d["ttft_ms"] = m.ttft_ms;
    d["tpot_ms"] = m.tpot_ms;
    d["feasible"] = m.feasible;
    return d;
}

py::dict individual_dict(const Individual& i) {
    py::dict d;
    d["id"] = i.id;
    d["born"] = i.born;
    d["lineage"] = i.lineage;
    d["parents"] = i.parents;
    d["val_loss"] = i.obj.val_loss;
    d["e_tok_uj"] = i.obj.e_tok_uj;
    d["ttft_ms"] = i.obj.ttft_ms;
    d["tpot_ms"] = i.obj.tpot_ms;
    d["feasible"] = i.obj.feasible;
    d["params_m"] = i.params_m;
    d["genome"] = to_py(to_json(i.genome));
    return d;
}

AttentionVariant variant_of(const std::string& s) {
    if (s == "gqa") return AttentionVariant::gqa;
    if (s == "iha") return AttentionVariant::iha;
    throw std::invalid_argument("variant must be 'gqa' or 'iha'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Heterogeneous-attention architecture search core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    // genome
    m.def(
        "count_configs",
        [](const std::string& variant, int d_model) {
            return count_attention_configs(variant_of(variant), d_model, SpaceRanges{});
        },
        py::arg("variant"), py::arg("d_model") = 768, "per-layer attention shape count");
    m.def(
        "random_genome",
        [](std::uint64_t seed, int d_model, int max_layers, const std::string& variant) {
            SpaceRanges r;
            r.variant = variant_of(variant);
            GlobalConfig g;
            g.d_model = d_model;
            g.max_layers = max_layers;
            return to_py(to_json(random_genome(r, seed, g)));
        },
        py::arg("seed"), py::arg("d_model") = 768, py::arg("max_layers") = 40, py::arg("variant") = "iha");
    m.def(
        "repair", [](const py::dict& g) { return to_py(to_json(repair(genome_of(g), SpaceRanges{}))); },
        py::arg("genome"));
    m.def(
        "validate",
        [](const py::dict& g) {
            std::vector<std::string> out;
            for (const auto& v : validate(genome_of(g), SpaceRanges{}))
                out.push_back("layer " + std::to_string(v.layer) + " " + v.field + ": " + v.rule);
            return out;
        },
        py::arg("genome"), "violations; empty when valid");
    m.def(
        "count_params", [](const py::dict& g, std::int64_t vocab) { return count_params(genome_of(g), vocab); },
        py::arg("genome"), py::arg("vocab") = kDefaultVocab);
    m.def("group_map", &group_map, py::arg("h"), py::arg("n_h"), py::arg("n_kv"));

    // reference attention
    m.def(
        "iha_forward",
        [](const Eigen::MatrixXd& x, const py::dict& gene, const Eigen::MatrixXd& wq, const Eigen::MatrixXd& wk,
           const Eigen::MatrixXd& wv, const Eigen::MatrixXd& wo, bool causal) {
            const auto j = from_py(gene);
            LayerGene l;
            l.mask = true;
            l.attn = j.value("attn", true);
            l.n_h = j.at("n_h").get<int>();
            l.n_kv = j.at("n_kv").get<int>();
            l.d_qk = j.at("d_qk").get<int>();
            l.d_v = j.at("d_v").get<int>();
            l.d_mlp = j.value("d_mlp", 512);
            return iha_forward(x, l, AttnWeights{wq, wk, wv, wo}, causal);
        },
        py::arg("x"), py::arg("gene"), py::arg("wq"), py::arg("wk"), py::arg("wv"), py::arg("wo"),
        py::arg("causal") = false);
    m.def(
        "check_iha",
        [](std::uint64_t seed, int draws) {
            std::vector<std::tuple<std::string, bool, double>> out;
            for (const auto& c : run_iha_checks(seed, draws)) out.emplace_back(c.name, c.passed, c.max_error);
            return out;
        },
        py::arg("seed") = 1, py::arg("draws") = 100);

    // metrics
    m.def("kendall_tau", [](std::vector<double> p, std::vector<double> t) { return kendall_tau(p, t); });
    m.def("spearman_rho", [](std::vector<double> p, std::vector<double> t) { return spearman_rho(p, t); });
    m.def("k_at_x", [](std::vector<double> p, std::vector<double> t, double x) { return k_at_x(p, t, x); });
    m.def("mae_at_top", [](std::vector<double> p, std::vector<double> t, double x) { return mae_at_top(p, t, x); });
    m.def("pareto_front", [](const std::vector<std::vector<double>>& pts) { return pareto_front(pts); });
    m.def("hypervolume_2d", [](const std::vector<std::array<double, 2>>& pts, std::array<double, 2> ref) {
        return hypervolume_2d(pts, ref).value;
    });

    // hardware cost
    m.def("substrate_names", &substrate_names);
    m.def(
        "substrate_cost",
        [](const py::dict& g, const std::string& preset, int prefill, int decode) {
            return metrics_dict(substrate_cost(genome_of(g), substrate_preset(preset), Workload{prefill, decode}));
        },
        py::arg("genome"), py::arg("preset") = "gemmini", py::arg("prefill") = 256, py::arg("decode") = 256);
    m.def(
        "chip_grid_search",
        [](const py::dict& g, int prefill, int decode, std::size_t top_k) {
            const auto r = chip_grid_search(genome_of(g), Workload{prefill, decode}, ChipGrid{}, top_k);
            py::list configs, top;
            for (const auto& c : r.configs) {
                py::dict d;
                d["n_mac"] = c.n_mac;
                d["w_core_kb"] = c.w_core_kb;
                d["n_chips_max"] = c.n_chips_max;
                d["feasible"] = c.feasible;
                configs.append(d);
            }
            for (const auto& t : r.top) {
                py::dict d = metrics_dict(t.metrics);
                d["grid_index"] = t.grid_index;
                d["n_chips"] = t.plan.n_chips();
                d["area_total"] = t.area_total;
                d["partition"] = t.plan.partition();
                top.append(d);
            }
            py::dict out;
            out["configs"] = configs;
            out["top"] = top;
            return out;
        },
        py::arg("genome"), py::arg("prefill") = 512, py::arg("decode") = 256, py::arg("top_k") = 3);

    // surrogate
    m.def("encoder_param_count", []() { return EncoderSurrogate::param_count(EncoderHyper{}); });
    m.def(
        "synth_oracle",
        [](const py::dict& g, std::uint64_t seed, double sd) { return synth_oracle(genome_of(g), seed, sd); },
        py::arg("genome"), py::arg("seed"), py::arg("noise_sd") = 0.02);
    m.def(
        "synthetic_corpus",
        [](std::size_t n, std::uint64_t seed) {
            const auto c = make_synthetic_corpus(n, seed);
            py::list rows;
            for (const auto& r : c.rows) rows.append(py::make_tuple(to_py(to_json(r.genome)), r.val_loss));
            return py::make_tuple(rows, c.train, c.test);
        },
        py::arg("n"), py::arg("seed"), "(rows, train indices, test indices)");

    py::class_<EncoderSurrogate>(m, "EncoderSurrogate")
        .def_static("load", [](const std::string& path) { return EncoderSurrogate::from_json(load_checkpoint(path)); })
        .def_static(
            "train",
            [](std::size_t n, std::uint64_t corpus_seed, int epochs, std::uint64_t seed) {
                TrainConfig tc;
                tc.epochs = epochs;
                tc.seed = seed;
                py::gil_scoped_release nogil;
                return train_encoder(make_synthetic_corpus(n, corpus_seed), EncoderHyper{}, tc);
            },
            py::arg("n") = 256, py::arg("corpus_seed") = 0, py::arg("epochs") = 30, py::arg("seed") = 100,
            "train on a synthetic corpus")
        .def("save", [](const EncoderSurrogate& s, const std::string& path) { save_checkpoint(s.to_json(), path); })
        .def_property_readonly("param_count", [](const EncoderSurrogate& s) { return s.param_count(); })
        .def("predict", [](const EncoderSurrogate& s, const py::dict& g) { return s.predict(genome_of(g)); })
        .def(
            "mc_predict",
            [](const EncoderSurrogate& s, const py::dict& g, int n_mc, std::uint64_t seed) {
                const auto p = mc_predict(s, s.features(genome_of(g)), n_mc, seed);
                return py::make_tuple(p.mean, p.stddev);
            },
            py::arg("genome"), py::arg("n_mc") = 10, py::arg("seed") = 0);

    // search
    m.def(
        "search_preset", [](const std::string& name) { return to_py(to_json(search_preset(name))); },
        py::arg("name"));
    m.def(
        "run_search",
        [](const py::dict& cfg) {
            const SearchConfig c = search_config_from_json(from_py(cfg));
            SearchResult r;
            {
                py::gil_scoped_release nogil;
                r = run_search(c);
            }
            py::list archive, stats;
            for (const auto& i : r.archive) archive.append(individual_dict(i));
            for (const auto& s : r.stats) {
                py::dict d;
                d["generation"] = s.generation;
                d["evaluations"] = s.evaluations;
                d["best_val_loss"] = s.best_val_loss;
                d["feasible"] = s.feasible;
                d["archive_size"] = s.archive_size;
                d["hypervolume"] = s.hypervolume;
                d["refined"] = s.refined;
                stats.append(d);
            }
            py::dict out;
            out["archive"] = archive;
            out["stats"] = stats;
            out["evaluations"] = r.history.size();
            out["backend"] = r.backend;
            out["refinements"] = r.events.size();
            return out;
        },
        py::arg("config"), "config dict in the CLI's JSON layout");
    m.def(
        "ablation",
        [](const py::dict& cfg, const std::vector<std::uint64_t>& seeds) {
            const SearchConfig c = search_config_from_json(from_py(cfg));
            AblationResult a;
            {
                py::gil_scoped_release nogil;
                a = ablation_suite(c, seeds);
            }
            return to_py(to_json(a));
        },
        py::arg("config"), py::arg("seeds"));
}
