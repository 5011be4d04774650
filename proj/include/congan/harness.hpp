#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "congan/dataset.hpp"
#include "congan/dgp.hpp"
#include "congan/estimators.hpp"
#include "congan/evaluation.hpp"
#include "congan/kde.hpp"
#include "congan/model_io.hpp"
#include "congan/training.hpp"

namespace congan {

// Desk-scale bandwidth conventions for the table columns. The conditional
// mean columns use a fixed multiple of the robust spread of the
// conditioning sample (n-independent, matching the Monte-Carlo tables);
// the 2D partial-means surfaces use the rule-of-thumb scale.
inline double column_bandwidth(std::span<const double> xs) { return 1.25 * robust_sd(xs); }
inline double surface_bandwidth(std::span<const double> v) { return silverman_bandwidth_robust(v); }

struct EvalConfig {
    double alpha = 0.05;
    double lambda = 0.05;
    int n_permutations = 999;
};

struct RunConfig {
    DGPSpec dgp;
    std::size_t n_obs = 2000;
    int n_replicates = 10;
    std::vector<int> quantiles;  // percent units; default 5,10,...,95
    TrainConfig train;           // CONGAN stage settings
    int init_iterations = 100;
    int congan_iterations = 500;
    std::vector<int> hidden{16, 4, 3, 2};
    bool do_train = true;
    EvalConfig eval;
    std::string out_dir;
    std::uint64_t master_seed = 1;

    RunConfig() { for (int q = 5; q <= 95; q += 5) quantiles.push_back(q); }

    std::uint64_t replicate_seed(int r) const {
        return master_seed ^ static_cast<std::uint64_t>(r);
    }
};

struct ReplicateRow {
    int q = 0;
    double x = 0.0;
    std::optional<double> c, d, e, f, g, h;
    std::size_t g_unsupported = 0, h_unsupported = 0;
};

struct ReplicateResult {
    int rep = 0;
    bool failed = false;
    std::string fail_reason;
    std::vector<ReplicateRow> rows;
    TrainTrace congan_trace;  // empty when training disabled
    TrainedModel model;       // valid when trained
    bool has_model = false;
};

// One full replicate: simulate, optionally train, evaluate all columns at
// the realized action quantiles.
inline ReplicateResult run_replicate(const RunConfig& cfg, int r) {
    ReplicateResult out;
    out.rep = r;
    const std::uint64_t seed = cfg.replicate_seed(r);
    Dataset ds = simulate(cfg.dgp, cfg.n_obs, seed);
    const auto xs = ds.xs();
    const auto ys = ds.ys();
    const auto zs = ds.zs();
    const auto oms = ds.omegas();

    Dataset cf = make_cf_dataset(cfg.dgp, zs, seed);
    const auto cf_xs = cf.xs();
    const auto cf_ys = cf.ys();

    const double bw_c = column_bandwidth(xs);
    const double bw_e = column_bandwidth(cf_xs);
    const double bw_sx = surface_bandwidth(xs);
    const double bw_z = surface_bandwidth(zs);
    const double bw_om = surface_bandwidth(oms);
    const auto vhat = control_values(xs, zs, bw_z);
    const double bw_v = surface_bandwidth(vhat);

    Dataset synth_o, synth_c;
    double bw_d = 0.0, bw_f = 0.0;
    std::vector<double> so_xs, so_ys, scf_xs, scf_ys;
    if (cfg.do_train) {
        AffineMap zm = fit_affine(zs), xm = fit_affine(xs), ym = fit_affine(ys);
        Dataset std_ds = standardize(ds, zm, xm, ym);
        GeneratorParams p0 = init_weights(cfg.hidden, seed);
        TrainConfig icfg = cfg.train;
        icfg.seed = seed;
        icfg.max_iterations = cfg.init_iterations;
        auto init = init_stage(std_ds, std::move(p0), icfg);
        if (init.trace.stop == StopReason::NonFinite) {
            out.failed = true;
            out.fail_reason = "init stage aborted on non-finite loss";
        } else {
            TrainConfig ccfg = cfg.train;
            ccfg.seed = seed + 1;
            ccfg.max_iterations = cfg.congan_iterations;
            auto congan = congan_stage(std_ds, std::move(init.params), init.sigma, ccfg);
            out.congan_trace = congan.trace;
            if (congan.trace.stop == StopReason::NonFinite) {
                out.failed = true;
                out.fail_reason = "congan stage aborted on non-finite loss";
            } else {
                out.model = TrainedModel{std::move(congan.params), congan.sigma, zm, xm, ym};
                out.has_model = true;
                synth_o = synth_observed(out.model, zs, seed + 2);
                synth_c = synth_cf(out.model, zs, seed + 3);
                so_xs = synth_o.xs();
                so_ys = synth_o.ys();
                scf_xs = synth_c.xs();
                scf_ys = synth_c.ys();
                bw_d = column_bandwidth(so_xs);
                bw_f = column_bandwidth(scf_xs);
            }
        }
    }

    std::vector<double> xs_sorted = xs;
    std::sort(xs_sorted.begin(), xs_sorted.end());
    for (int q : cfg.quantiles) {
        ReplicateRow row;
        row.q = q;
        row.x = quantile_sorted(xs_sorted, static_cast<double>(q) / 100.0);
        row.c = nw_mean(ys, xs, row.x, bw_c);
        row.e = nw_mean(cf_ys, cf_xs, row.x, bw_e);
        auto pg = partial_means(ys, xs, vhat, row.x, bw_sx, bw_v);
        row.g = pg.value;
        row.g_unsupported = pg.n_unsupported;
        auto ph = partial_means(ys, xs, oms, row.x, bw_sx, bw_om);
        row.h = ph.value;
        row.h_unsupported = ph.n_unsupported;
        if (out.has_model) {
            row.d = nw_mean(so_ys, so_xs, row.x, bw_d);
            row.f = nw_mean(scf_ys, scf_xs, row.x, bw_f);
        }
        out.rows.push_back(row);
    }
    return out;
}

struct ColumnStat {
    std::optional<double> mean_v;
    std::optional<double> se;  // sample standard deviation across replicates
    std::size_t n = 0;
};

struct TableRow {
    int q = 0;
    ColumnStat x, c, d, e, f, g, h;
    // per-quantile similarity marks (p-values from across-replicate tests)
    std::optional<double> p_d_vs_c, p_f_vs_e, p_g_vs_e, p_h_vs_e;
    bool dagger_d = false, ast_f = false, ast_g = false, ast_h = false;
};

struct EstimateTable {
    std::vector<TableRow> rows;
    int n_replicates = 0;
    int n_failed = 0;
    // whole-sequence tests pooled over the quantile grid
    std::optional<SimilarityReport> seq_d_vs_c, seq_f_vs_e, seq_g_vs_e, seq_h_vs_e;
};

namespace harness_detail {

inline ColumnStat stat_of(const std::vector<double>& v) {
    ColumnStat s;
    s.n = v.size();
    if (!v.empty()) s.mean_v = mean(v);
    if (v.size() >= 2) s.se = sample_sd(v);
    return s;
}

using RowGetter = std::optional<double> (*)(const ReplicateRow&);

inline std::vector<double> collect(const std::vector<ReplicateResult>& reps, int q, RowGetter get) {
    std::vector<double> out;
    for (const auto& rep : reps) {
        if (rep.failed) continue;
        for (const auto& row : rep.rows)
            if (row.q == q) {
                auto v = get(row);
                if (v) out.push_back(*v);
            }
    }
    return out;
}

inline std::vector<double> collect_all(const std::vector<ReplicateResult>& reps, RowGetter get) {
    std::vector<double> out;
    for (const auto& rep : reps) {
        if (rep.failed) continue;
        for (const auto& row : rep.rows) {
            auto v = get(row);
            if (v) out.push_back(*v);
        }
    }
    return out;
}

}  // namespace harness_detail

// Across-replicate means, standard errors and similarity marks.
inline EstimateTable aggregate(const std::vector<ReplicateResult>& reps, const EvalConfig& eval,
                               std::uint64_t seed) {
    EstimateTable table;
    table.n_replicates = static_cast<int>(reps.size());
    for (const auto& r : reps) table.n_failed += r.failed ? 1 : 0;
    if (table.n_replicates - table.n_failed < 2)
        throw std::invalid_argument("aggregate: need at least 2 successful replicates");

    std::vector<int> qs;
    for (const auto& r : reps)
        if (!r.failed) {
            for (const auto& row : r.rows) qs.push_back(row.q);
            break;
        }

    using harness_detail::collect;
    auto get_x = +[](const ReplicateRow& r) { return std::optional<double>(r.x); };
    auto get_c = +[](const ReplicateRow& r) { return r.c; };
    auto get_d = +[](const ReplicateRow& r) { return r.d; };
    auto get_e = +[](const ReplicateRow& r) { return r.e; };
    auto get_f = +[](const ReplicateRow& r) { return r.f; };
    auto get_g = +[](const ReplicateRow& r) { return r.g; };
    auto get_h = +[](const ReplicateRow& r) { return r.h; };

    for (int q : qs) {
        TableRow row;
        row.q = q;
        row.x = harness_detail::stat_of(collect(reps, q, get_x));
        row.c = harness_detail::stat_of(collect(reps, q, get_c));
        row.d = harness_detail::stat_of(collect(reps, q, get_d));
        row.e = harness_detail::stat_of(collect(reps, q, get_e));
        row.f = harness_detail::stat_of(collect(reps, q, get_f));
        row.g = harness_detail::stat_of(collect(reps, q, get_g));
        row.h = harness_detail::stat_of(collect(reps, q, get_h));

        auto mark = [&](const std::vector<double>& a, const std::vector<double>& b,
                        std::optional<double>& p, bool& flag) {
            if (a.size() >= 10 && a.size() == b.size()) {
                auto rep = similarity_test(a, b, eval.alpha, eval.lambda, eval.n_permutations,
                                           seed ^ static_cast<std::uint64_t>(q));
                p = rep.p_value;
                flag = rep.pass;
            }
        };
        mark(collect(reps, q, get_c), collect(reps, q, get_d), row.p_d_vs_c, row.dagger_d);
        mark(collect(reps, q, get_e), collect(reps, q, get_f), row.p_f_vs_e, row.ast_f);
        mark(collect(reps, q, get_e), collect(reps, q, get_g), row.p_g_vs_e, row.ast_g);
        mark(collect(reps, q, get_e), collect(reps, q, get_h), row.p_h_vs_e, row.ast_h);
        table.rows.push_back(row);
    }

    using harness_detail::collect_all;
    auto whole = [&](harness_detail::RowGetter a, harness_detail::RowGetter b,
                     std::optional<SimilarityReport>& out, std::uint64_t salt) {
        auto va = collect_all(reps, a);
        auto vb = collect_all(reps, b);
        if (va.size() >= 10 && va.size() == vb.size())
            out = similarity_test(va, vb, eval.alpha, eval.lambda, eval.n_permutations, seed ^ salt);
    };
    whole(get_c, get_d, table.seq_d_vs_c, 0xD1);
    whole(get_e, get_f, table.seq_f_vs_e, 0xF1);
    whole(get_e, get_g, table.seq_g_vs_e, 0x61);
    whole(get_e, get_h, table.seq_h_vs_e, 0x71);
    return table;
}

namespace harness_detail {

inline std::string opt_str(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

inline std::string fixed2(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", *v);
    return buf;
}

inline std::string fixed3p(const std::optional<double>& v) {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "(%.3f)", *v);
    return buf;
}

}  // namespace harness_detail

inline void emit_csv(const EstimateTable& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("emit_csv: cannot open " + path);
    out << "q,x_mean,x_se,c_mean,c_se,d_mean,d_se,e_mean,e_se,f_mean,f_se,g_mean,g_se,h_mean,h_se,"
           "dagger_d,ast_f,ast_g,ast_h\n";
    using harness_detail::opt_str;
    for (const auto& r : t.rows) {
        out << r.q << ',' << opt_str(r.x.mean_v) << ',' << opt_str(r.x.se) << ','
            << opt_str(r.c.mean_v) << ',' << opt_str(r.c.se) << ',' << opt_str(r.d.mean_v) << ','
            << opt_str(r.d.se) << ',' << opt_str(r.e.mean_v) << ',' << opt_str(r.e.se) << ','
            << opt_str(r.f.mean_v) << ',' << opt_str(r.f.se) << ',' << opt_str(r.g.mean_v) << ','
            << opt_str(r.g.se) << ',' << opt_str(r.h.mean_v) << ',' << opt_str(r.h.se) << ','
            << (r.dagger_d ? 1 : 0) << ',' << (r.ast_f ? 1 : 0) << ',' << (r.ast_g ? 1 : 0) << ','
            << (r.ast_h ? 1 : 0) << '\n';
    }
}

inline void emit_text(const EstimateTable& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("emit_text: cannot open " + path);
    using harness_detail::fixed2;
    using harness_detail::fixed3p;
    out << "  q        x     (c) real     (d) synt      (e) real     (f) synt       (g) IN       (h) PM\n";
    for (const auto& r : t.rows) {
        char line[256];
        std::snprintf(line, sizeof(line), "%3d %8s %12s %12s%s %12s %12s%s %12s %12s\n", r.q,
                      fixed2(r.x.mean_v).c_str(), fixed2(r.c.mean_v).c_str(),
                      fixed2(r.d.mean_v).c_str(), r.dagger_d ? "+" : " ",
                      fixed2(r.e.mean_v).c_str(), fixed2(r.f.mean_v).c_str(), r.ast_f ? "*" : " ",
                      fixed2(r.g.mean_v).c_str(), fixed2(r.h.mean_v).c_str());
        out << line;
        std::snprintf(line, sizeof(line), "    %8s %12s %12s  %12s %12s  %12s %12s\n",
                      fixed3p(r.x.se).c_str(), fixed3p(r.c.se).c_str(), fixed3p(r.d.se).c_str(),
                      fixed3p(r.e.se).c_str(), fixed3p(r.f.se).c_str(), fixed3p(r.g.se).c_str(),
                      fixed3p(r.h.se).c_str());
        out << line;
    }
    out << "replicates: " << t.n_replicates << " (failed: " << t.n_failed << ")\n";
}

inline nlohmann::json similarity_to_json(const SimilarityReport& r) {
    return {{"distance", r.distance}, {"p_value", r.p_value},          {"pass", r.pass},
            {"alpha", r.alpha},       {"lambda", r.lambda},            {"n_permutations", r.n_permutations}};
}

inline void emit_json(const EstimateTable& t, const std::string& path) {
    nlohmann::json rows = nlohmann::json::array();
    auto put = [](nlohmann::json& j, const char* key, const ColumnStat& s) {
        if (s.mean_v) j[std::string(key) + "_mean"] = *s.mean_v;
        if (s.se) j[std::string(key) + "_se"] = *s.se;
    };
    for (const auto& r : t.rows) {
        nlohmann::json j;
        j["q"] = r.q;
        put(j, "x", r.x);
        put(j, "c", r.c);
        put(j, "d", r.d);
        put(j, "e", r.e);
        put(j, "f", r.f);
        put(j, "g", r.g);
        put(j, "h", r.h);
        if (r.p_d_vs_c) j["p_d_vs_c"] = *r.p_d_vs_c;
        if (r.p_f_vs_e) j["p_f_vs_e"] = *r.p_f_vs_e;
        if (r.p_g_vs_e) j["p_g_vs_e"] = *r.p_g_vs_e;
        if (r.p_h_vs_e) j["p_h_vs_e"] = *r.p_h_vs_e;
        j["dagger_d"] = r.dagger_d;
        j["ast_f"] = r.ast_f;
        j["ast_g"] = r.ast_g;
        j["ast_h"] = r.ast_h;
        rows.push_back(j);
    }
    nlohmann::json doc;
    doc["rows"] = rows;
    doc["n_replicates"] = t.n_replicates;
    doc["n_failed"] = t.n_failed;
    if (t.seq_d_vs_c) doc["seq_d_vs_c"] = similarity_to_json(*t.seq_d_vs_c);
    if (t.seq_f_vs_e) doc["seq_f_vs_e"] = similarity_to_json(*t.seq_f_vs_e);
    if (t.seq_g_vs_e) doc["seq_g_vs_e"] = similarity_to_json(*t.seq_g_vs_e);
    if (t.seq_h_vs_e) doc["seq_h_vs_e"] = similarity_to_json(*t.seq_h_vs_e);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("emit_json: cannot open " + path);
    out << doc.dump(2) << '\n';
}

// Reads back the machine CSV (used by the round-trip checks).
inline EstimateTable read_table_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_table_csv: cannot open " + path);
    std::string line;
    std::getline(in, line);  // header
    EstimateTable t;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        while (cells.size() < 19) cells.push_back("");
        TableRow r;
        r.q = std::stoi(cells[0]);
        auto opt = [&](std::size_t i) -> std::optional<double> {
            if (i >= cells.size() || cells[i].empty()) return std::nullopt;
            return std::stod(cells[i]);
        };
        r.x = {opt(1), opt(2), 0};
        r.c = {opt(3), opt(4), 0};
        r.d = {opt(5), opt(6), 0};
        r.e = {opt(7), opt(8), 0};
        r.f = {opt(9), opt(10), 0};
        r.g = {opt(11), opt(12), 0};
        r.h = {opt(13), opt(14), 0};
        r.dagger_d = cells[15] == "1";
        r.ast_f = cells[16] == "1";
        r.ast_g = cells[17] == "1";
        r.ast_h = cells[18] == "1";
        t.rows.push_back(r);
    }
    return t;
}

struct TableRun {
    EstimateTable table;
    std::vector<ReplicateResult> replicates;
};

// The end-to-end pipeline: R replicates of simulate -> (train) -> estimate,
// aggregated and written out as CSV/text/JSON.
inline TableRun run_table(const RunConfig& cfg) {
    std::vector<ReplicateResult> reps;
    reps.reserve(static_cast<std::size_t>(cfg.n_replicates));
    for (int r = 0; r < cfg.n_replicates; ++r) reps.push_back(run_replicate(cfg, r));
    TableRun out;
    out.table = aggregate(reps, cfg.eval, cfg.master_seed);
    out.replicates = std::move(reps);
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        emit_csv(out.table, cfg.out_dir + "/table.csv");
        emit_text(out.table, cfg.out_dir + "/table.txt");
        emit_json(out.table, cfg.out_dir + "/table.json");
        for (const auto& rep : out.replicates) {
            std::ofstream rows(cfg.out_dir + "/replicate_" + std::to_string(rep.rep) + ".csv");
            rows << "q,x,c,d,e,f,g,h,g_unsupported,h_unsupported\n";
            using harness_detail::opt_str;
            for (const auto& row : rep.rows)
                rows << row.q << ',' << format_double(row.x) << ',' << opt_str(row.c) << ','
                     << opt_str(row.d) << ',' << opt_str(row.e) << ',' << opt_str(row.f) << ','
                     << opt_str(row.g) << ',' << opt_str(row.h) << ',' << row.g_unsupported << ','
                     << row.h_unsupported << '\n';
            if (rep.has_model) {
                save_model(rep.model, cfg.out_dir + "/model_" + std::to_string(rep.rep) + ".json");
                write_trace_csv(rep.congan_trace,
                                cfg.out_dir + "/trace_" + std::to_string(rep.rep) + ".csv");
            }
        }
    }
    return out;
}

}  // namespace congan
