#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "domeval/config.hpp"
#include "domeval/datagen.hpp"
#include "domeval/error.hpp"
#include "domeval/eval.hpp"
#include "domeval/metrics.hpp"
#include "domeval/pipeline.hpp"
#include "domeval/providers.hpp"
#include "domeval/ranking.hpp"

namespace py = pybind11;
using namespace domeval;

namespace {

ranking::ScoreVector to_vector(const std::string& name, const std::vector<double>& scores) {
    ranking::ScoreVector v{name, "", {}, scores};
    for (std::size_t i = 0; i < scores.size(); ++i) v.item_ids.push_back(std::to_string(i));
    return v;
}

py::dict pair_dict(const ranking::PairwiseResult& p) {
    py::dict d;
    d["system_a"] = p.system_a;
    d["system_b"] = p.system_b;
    d["mean_diff"] = p.mean_diff;
    d["ci_low"] = p.ci_low;
    d["ci_high"] = p.ci_high;
    d["significant"] = p.significant;
    return d;
}

}  // namespace

PYBIND11_MODULE(_domeval, m) {
    m.doc() = "domeval core bindings";

    static py::exception<Error> error(m, "DomevalError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetString(error.ptr(), (std::string(to_string(e.code())) + ": " + e.what()).c_str());
        }
    });

    py::class_<metrics::PRF>(m, "PRF")
        .def_readonly("precision", &metrics::PRF::precision)
        .def_readonly("recall", &metrics::PRF::recall)
        .def_readonly("f1", &metrics::PRF::f1)
        .def("__repr__", [](const metrics::PRF& x) {
            return "PRF(precision=" + std::to_string(x.precision) + ", recall=" + std::to_string(x.recall) +
                   ", f1=" + std::to_string(x.f1) + ")";
        });

    m.def("bleu", [](const std::string& candidate, const std::vector<std::string>& references, std::size_t max_n) {
        return metrics::bleu(candidate, references, max_n);
    }, py::arg("candidate"), py::arg("references"), py::arg("max_n") = 4);
    m.def("rouge_n", &metrics::rouge_n, py::arg("candidate"), py::arg("reference"), py::arg("n"));
    m.def("rouge_l", &metrics::rouge_l, py::arg("candidate"), py::arg("reference"));
    m.def("score_pair", [](const std::string& candidate, const std::string& reference, std::size_t dimension, std::uint64_t seed) {
        providers::HashTokenEmbedder emb("hash-tokens", dimension, seed);
        auto r = metrics::score_pair(candidate, reference, emb);
        py::dict d;
        d["bleu"] = r.bleu;
        d["rouge1"] = r.rouge1;
        d["rouge2"] = r.rouge2;
        d["rougeL"] = r.rougeL;
        d["bertscore"] = r.bertscore;
        return d;
    }, py::arg("candidate"), py::arg("reference"), py::arg("dimension") = 256, py::arg("seed") = 13,
       "All metrics; BERTScore uses the offline hash token embedder.");

    m.def("count_syllables", &datagen::count_syllables, py::arg("word"));
    m.def("flesch_reading_ease", &datagen::flesch_reading_ease, py::arg("text"));
    m.def("normalize_question", &datagen::normalize_question, py::arg("question"));
    m.def("split_counts", [](std::size_t n, double train, double validation, double test) {
        return datagen::split_counts(n, {train, validation, test});
    }, py::arg("n"), py::arg("train") = 0.8, py::arg("validation") = 0.1, py::arg("test") = 0.1);

    m.def("parse_label", [](const std::string& s) { return std::string(eval::to_string(eval::parse_label(s))); },
          py::arg("label"), "Canonical category name.");
    m.def("label_score", [](const std::string& s) { return eval::label_score(eval::parse_label(s)); }, py::arg("label"));
    m.def("parse_answer_letter", [](const std::string& s) -> std::optional<std::string> {
        auto i = eval::parse_answer_letter(s);
        if (!i) return std::nullopt;
        return std::string(1, static_cast<char>('A' + *i));
    }, py::arg("response"));
    m.def("option_permutation", &eval::option_permutation, py::arg("seed"), py::arg("item_id"));

    m.def("median", &ranking::median, py::arg("values"));
    m.def("bootstrap_pair", [](const std::vector<double>& a, const std::vector<double>& b, std::size_t n_iter, std::uint64_t seed) {
        return pair_dict(ranking::bootstrap_pair(to_vector("a", a), to_vector("b", b), n_iter, seed));
    }, py::arg("a"), py::arg("b"), py::arg("n_iter") = 1000, py::arg("seed") = 0);
    m.def("rank_with_ties", [](const std::map<std::string, std::vector<double>>& systems, std::size_t n_iter, std::uint64_t seed) {
        std::vector<ranking::ScoreVector> vs;
        for (const auto& [name, scores] : systems) vs.push_back(to_vector(name, scores));
        auto board = ranking::rank_with_ties(vs, n_iter, seed);
        py::list entries, pairs;
        for (const auto& e : board.entries) {
            py::dict d;
            d["system"] = e.system;
            d["mean_score"] = e.mean_score;
            d["rank"] = e.rank;
            entries.append(d);
        }
        for (const auto& p : board.pairwise) pairs.append(pair_dict(p));
        py::dict out;
        out["entries"] = entries;
        out["pairwise"] = pairs;
        return out;
    }, py::arg("systems"), py::arg("n_iter") = 1000, py::arg("seed") = 0);
    m.def("median_rank", [](const std::vector<std::pair<std::string, std::map<std::string, std::vector<double>>>>& systems,
                            const std::vector<std::string>& categories) {
        std::vector<ranking::SystemRanks> in;
        for (const auto& [name, ranks] : systems) in.push_back({name, ranks});
        py::list out;
        for (const auto& r : ranking::median_rank(in, categories)) {
            py::dict d;
            d["system"] = r.system;
            d["category_rank"] = r.category_rank;
            d["median_rank"] = r.median_rank;
            out.append(d);
        }
        return out;
    }, py::arg("systems"), py::arg("categories"),
       "systems: list of (name, {category: [ranks]}) in input order.");

    m.def("run_end_to_end", [](const std::filesystem::path& manifest, const std::filesystem::path& out_dir,
                               std::optional<std::uint64_t> seed, std::optional<std::string> config) {
        auto cfg = config ? config::RunConfig::load(*config) : config::RunConfig::defaults();
        if (seed) cfg.seed = *seed;
        py::gil_scoped_release release;
        return pipeline::run_end_to_end(manifest, cfg, out_dir);
    }, py::arg("manifest"), py::arg("out_dir"), py::arg("seed") = py::none(), py::arg("config") = py::none(),
       "Full offline pipeline; returns the written file names.");
}
