#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cli_config.hpp"
#include "plsearch.hpp"

namespace plsearch::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kInvariant = 3 };

namespace detail {

inline PcmSignal read_audio(const std::filesystem::path& path, const Settings& s) {
    PcmSignal sig = decode_wav(path);
    if (std::abs(sig.sample_rate - s.sample_rate) > 1e-9) {
        throw DecodeError(path.string() + " is sampled at " + std::to_string(sig.sample_rate) + " Hz, expected " +
                          std::to_string(s.sample_rate) + " Hz");
    }
    return sig;
}

inline BaseFeatureSeq features_of(const std::filesystem::path& path, const Settings& s) {
    s.filterbank.validate(s.sample_rate);
    return extract_base_features(read_audio(path, s), s.filterbank);
}

inline CodewordSeq codewords_of(const std::filesystem::path& path, const Codebook& cb, const Settings& s) {
    return quantize_all(features_of(path, s), cb);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

inline nlohmann::json counters_json(const SearchCounters& c) {
    return {{"positions", c.positions},
            {"full_evaluations", c.full_evaluations},
            {"compressed_evaluations", c.compressed_evaluations},
            {"block_checks", c.block_checks},
            {"block_prunes", c.block_prunes},
            {"frames_skipped", c.frames_skipped},
            {"frames_pruned", c.frames_pruned},
            {"slide_steps", c.slide_steps},
            {"query_compressions", c.query_compressions},
            {"query_cache_hits", c.query_cache_hits}};
}

inline bool same_matches(const std::vector<Match>& a, const std::vector<Match>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].position != b[i].position) return false;
        if (std::abs(a[i].distance - b[i].distance) > 1e-6 * std::max(1.0, std::abs(b[i].distance))) return false;
    }
    return true;
}

inline std::string query_name(std::size_t i) {
    std::ostringstream ss;
    ss << "query_" << std::setw(2) << std::setfill('0') << i << ".wav";
    return ss.str();
}

// Pulls --config out of argv before the real parse so flag defaults can come
// from the file.
inline std::string find_config_path(int argc, const char* const* argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) return argv[i + 1];
        if (a.rfind("--config=", 0) == 0) return a.substr(9);
    }
    return {};
}

} // namespace detail

struct Paths {
    std::string out_dir, out, trace, input, codebook, index, query, json, stats, csv;
    std::vector<std::string> inputs, queries;
    std::vector<double> thetas;
    std::size_t repeat = 1;
};

inline int cmd_gen(const Settings& s, const Paths& p, std::ostream& out) {
    AudioGenSpec spec = s.gen;
    spec.sample_rate = s.sample_rate;
    spec.hop_seconds = s.filterbank.frame_hop;
    const AudioCorpus corpus = generate_corpus(spec, s.seed);
    const std::filesystem::path dir = p.out_dir;
    std::filesystem::create_directories(dir);
    write_wav(dir / "stored.wav", corpus.stored);
    nlohmann::json truth = {{"seed", s.seed},
                            {"sample_rate", spec.sample_rate},
                            {"hop_seconds", spec.hop_seconds},
                            {"stored", "stored.wav"},
                            {"stored_seconds", corpus.stored.duration()},
                            {"snr_db", std::isfinite(spec.snr_db) ? nlohmann::json(spec.snr_db) : nlohmann::json(nullptr)}};
    nlohmann::json queries = nlohmann::json::array();
    for (std::size_t q = 0; q < corpus.queries.size(); ++q) {
        const std::string name = detail::query_name(q);
        write_wav(dir / name, corpus.queries[q]);
        nlohmann::json copies = nlohmann::json::array();
        for (const auto& c : corpus.truth) {
            if (c.query == q) copies.push_back({{"start_frame", c.start_frame}, {"start_seconds", c.start_seconds}});
        }
        queries.push_back({{"file", name}, {"seconds", corpus.queries[q].duration()}, {"copies", copies}});
    }
    truth["queries"] = queries;
    detail::write_text(dir / "truth.json", truth.dump(2) + "\n");
    out << "wrote " << corpus.queries.size() << " queries and " << corpus.truth.size() << " planted copies to "
        << dir.string() << "\n";
    return kOk;
}

inline int cmd_build_codebook(const Settings& s, const Paths& p, std::ostream& out) {
    BaseFeatureSeq all;
    for (const auto& in : p.inputs) {
        const BaseFeatureSeq f = detail::features_of(in, s);
        if (all.dim == 0) {
            all = f;
        } else {
            all.data.insert(all.data.end(), f.data.begin(), f.data.end());
        }
    }
    LbgOptions opt;
    opt.target_size = s.codebook_size;
    opt.max_iters = s.lbg_iters;
    opt.tol = s.lbg_tol;
    opt.epsilon = s.lbg_epsilon;
    opt.threads = s.threads;
    std::vector<LbgTraceEntry> trace;
    const Codebook cb = train_lbg(all, opt, &trace);
    save_codebook(cb, p.out);
    if (!p.trace.empty()) {
        std::ostringstream csv;
        csv << "codebook_size,iteration,distortion\n" << std::setprecision(17);
        for (const auto& e : trace) csv << e.codebook_size << "," << e.iteration << "," << e.distortion << "\n";
        detail::write_text(p.trace, csv.str());
    }
    out << "codebook: " << cb.size() << " x " << cb.dim << ", " << all.frame_count()
        << " training frames, distortion " << mean_distortion(all, cb) << "\n";
    return kOk;
}

inline int cmd_build_index(const Settings& s, const Paths& p, std::ostream& out) {
    const Codebook cb = load_codebook(p.codebook);
    const CodewordSeq codes = detail::codewords_of(p.input, cb, s);
    IndexParams params = s.index;
    params.method = parse_segmentation_method(s.dynseg);
    BuildStats st;
    const PLIndex idx = build_index(codes, params, codebook_hash(cb), s.threads, &st);
    save_index(idx, p.out);
    if (!p.stats.empty()) {
        const nlohmann::json j = {{"positions", st.positions},
                                  {"segments", st.segments},
                                  {"dynseg", std::string(to_string(st.method))},
                                  {"dynseg_probes", st.probes},
                                  {"initial_objective", st.initial_objective},
                                  {"objective", st.objective},
                                  {"mean_dim", st.mean_dim},
                                  {"max_dim", st.max_dim},
                                  {"bins", idx.bins},
                                  {"blocks", st.blocks},
                                  {"compressed_values", st.compressed_values},
                                  {"seconds",
                                   {{"moments", st.seconds_moments},
                                    {"segmentation", st.seconds_segmentation},
                                    {"fit", st.seconds_fit},
                                    {"compress", st.seconds_compress},
                                    {"blocks", st.seconds_blocks}}}};
        detail::write_text(p.stats, j.dump(2) + "\n");
    }
    out << "index: " << st.positions << " positions, " << st.segments << " segments, mean dim " << st.mean_dim
        << " of " << idx.bins << ", " << st.blocks << " blocks\n";
    return kOk;
}

inline void check_codebook(const PLIndex& idx, const Codebook& cb) {
    if (codebook_hash(cb) != idx.codebook_hash) {
        throw ConsistencyError("codebook does not match the one the index was built with");
    }
}

inline int cmd_search(const Settings& s, const Paths& p, std::ostream& out) {
    const PLIndex idx = load_index(p.index, s.threads);
    const Codebook cb = load_codebook(p.codebook);
    check_codebook(idx, cb);
    const CodewordSeq q = detail::codewords_of(p.query, cb, s);
    const SearchMode mode = parse_search_mode(s.mode);
    const SearchReport r = run_search(idx, q, s.theta, mode);
    nlohmann::json matches = nlohmann::json::array();
    for (const auto& m : r.matches) {
        matches.push_back({{"position_frames", m.position},
                           {"position_seconds", static_cast<double>(m.position) * s.filterbank.frame_hop},
                           {"distance", m.distance}});
    }
    const nlohmann::json j = {
        {"mode", std::string(to_string(mode))}, {"theta", s.theta}, {"matches", matches}, {"counters", detail::counters_json(r.counters)}};
    if (!p.json.empty()) detail::write_text(p.json, j.dump(2) + "\n");
    out << r.matches.size() << " matches (" << to_string(mode) << ", theta " << s.theta << ")\n";
    for (const auto& m : r.matches) {
        out << "  frame " << m.position << "  " << std::fixed << std::setprecision(2)
            << static_cast<double>(m.position) * s.filterbank.frame_hop << " s  distance " << std::setprecision(4)
            << m.distance << "\n";
        out.unsetf(std::ios::floatfield);
    }
    return kOk;
}

struct BenchRow {
    std::string query;
    double theta = 0;
    SearchMode mode = SearchMode::proposed;
    SearchReport report;
    double seconds = 0;
};

inline int cmd_bench(const Settings& s, const Paths& p, std::ostream& out) {
    const PLIndex idx = load_index(p.index, s.threads);
    const Codebook cb = load_codebook(p.codebook);
    check_codebook(idx, cb);
    std::vector<CodewordSeq> queries;
    for (const auto& q : p.queries) queries.push_back(detail::codewords_of(q, cb, s));
    const std::vector<double> thetas = p.thetas.empty() ? std::vector<double>{s.theta} : p.thetas;
    const SearchMode modes[] = {SearchMode::bruteforce, SearchMode::tas, SearchMode::proposed};
    const std::size_t repeat = std::max<std::size_t>(1, p.repeat);

    std::vector<BenchRow> rows(queries.size() * thetas.size() * 3);
    auto work = [&](std::size_t qi) {
        for (std::size_t ti = 0; ti < thetas.size(); ++ti) {
            for (std::size_t mi = 0; mi < 3; ++mi) {
                BenchRow& row = rows[(qi * thetas.size() + ti) * 3 + mi];
                row.query = std::filesystem::path(p.queries[qi]).filename().string();
                row.theta = thetas[ti];
                row.mode = modes[mi];
                const auto t0 = std::chrono::steady_clock::now();
                for (std::size_t r = 0; r < repeat; ++r) row.report = run_search(idx, queries[qi], thetas[ti], modes[mi]);
                row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(s.threads, queries.size()));
    if (threads == 1) {
        for (std::size_t qi = 0; qi < queries.size(); ++qi) work(qi);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t k = 0; k < threads; ++k) {
            pool.emplace_back([&, k] {
                for (std::size_t qi = k; qi < queries.size(); qi += threads) work(qi);
            });
        }
    }

    for (std::size_t i = 0; i < rows.size(); i += 3) {
        const auto& oracle = rows[i].report.matches;
        for (std::size_t k = 1; k < 3; ++k) {
            if (!detail::same_matches(rows[i + k].report.matches, oracle)) {
                throw InvariantError("match sets disagree for " + rows[i].query + " at theta " +
                                     std::to_string(rows[i].theta) + " (" + std::string(to_string(rows[i + k].mode)) +
                                     " vs bruteforce)");
            }
        }
    }

    std::map<SearchMode, double> time_total;
    std::map<SearchMode, std::size_t> full_total;
    std::ostringstream csv;
    csv << "query,theta,mode,matches,full_evaluations,compressed_evaluations,block_checks,block_prunes,"
           "frames_skipped,frames_pruned,slide_steps,seconds\n";
    for (const auto& r : rows) {
        const auto& c = r.report.counters;
        csv << r.query << "," << r.theta << "," << to_string(r.mode) << "," << r.report.matches.size() << ","
            << c.full_evaluations << "," << c.compressed_evaluations << "," << c.block_checks << "," << c.block_prunes
            << "," << c.frames_skipped << "," << c.frames_pruned << "," << c.slide_steps << "," << r.seconds << "\n";
        time_total[r.mode] += r.seconds;
        full_total[r.mode] += c.full_evaluations;
    }
    if (!p.csv.empty()) detail::write_text(p.csv, csv.str());
    const double speedup = time_total[SearchMode::tas] / std::max(time_total[SearchMode::proposed], 1e-12);
    out << "bench: " << queries.size() << " queries x " << thetas.size() << " thresholds, repeat " << repeat
        << ", match sets agree\n";
    for (SearchMode m : modes) {
        out << "  " << std::setw(10) << to_string(m) << ": " << std::setw(10) << time_total[m] << " s, "
            << full_total[m] << " full evaluations\n";
    }
    out << "  speed-up factor (tas / proposed): " << speedup << "\n";
    return kOk;
}

inline int cmd_validate_index(const Settings& s, const Paths& p, std::ostream& out) {
    const PLIndex idx = load_index(p.index, s.threads);
    double weighted = 0.0;
    for (const auto& seg : idx.segments) weighted += static_cast<double>(seg.length() * seg.dim());
    out << "index ok: W=" << idx.params.window << " n=" << idx.bins << " sigma=" << idx.params.sigma
        << " segments=" << idx.segments.size() << " blocks=" << idx.blocks.size() << " positions=" << idx.positions()
        << " mean_dim=" << weighted / static_cast<double>(idx.positions())
        << " dynseg=" << to_string(idx.params.method) << "\n";
    return kOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    Settings s;
    Paths p;
    std::string config_path;
    try {
        config_path = detail::find_config_path(argc, argv);
        if (!config_path.empty()) apply_config(s, read_config_file(config_path));
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }

    CLI::App app{"Segment-compressed audio search over codeword histograms"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--config", config_path, "JSON or TOML settings file");
    app.add_option("--seed", s.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", s.threads, "Worker threads")->capture_default_str()->check(CLI::Range(1, 256));

    auto* gen = app.add_subcommand("gen", "Generate a synthetic stored recording with planted query copies");
    gen->add_option("--out-dir", p.out_dir, "Output directory")->required();
    gen->add_option("--stored-seconds", s.gen.stored_seconds, "Stored recording length")->capture_default_str();
    gen->add_option("--queries", s.gen.queries, "Number of query clips")->capture_default_str();
    gen->add_option("--query-seconds", s.gen.query_seconds, "Query clip length")->capture_default_str();
    gen->add_option("--copies", s.gen.copies_per_query, "Planted copies per query")->capture_default_str();
    gen->add_option("--snr-db", s.gen.snr_db, "Add white noise to the stored recording at this SNR");

    auto* bcb = app.add_subcommand("build-codebook", "Train an LBG codebook on base features");
    bcb->add_option("--input", p.inputs, "Training WAV files")->required();
    bcb->add_option("--size", s.codebook_size, "Codebook size (power of two)")->capture_default_str();
    bcb->add_option("--out", p.out, "Codebook output path")->required();
    bcb->add_option("--trace", p.trace, "Write the distortion trace as CSV");

    auto* bidx = app.add_subcommand("build-index", "Build a segment-compressed search index");
    bidx->add_option("--input", p.input, "Stored WAV file")->required();
    bidx->add_option("--codebook", p.codebook, "Codebook file")->required();
    bidx->add_option("--window-frames", s.index.window, "Histogram window W in frames")->capture_default_str();
    bidx->add_option("--segments", s.index.segments, "Number of segments M")->capture_default_str();
    bidx->add_option("--sigma", s.index.sigma, "Contribution threshold")->capture_default_str();
    bidx->add_option("--delta", s.index.delta, "Shiftable range half-width")->capture_default_str();
    bidx->add_option("--block", s.index.block, "Sampling block length a")->capture_default_str();
    bidx->add_option("--dynseg", s.dynseg, "Boundary search: none|local|coarse|dp")->capture_default_str();
    bidx->add_option("--out", p.out, "Index output path")->required();
    bidx->add_option("--stats", p.stats, "Write build statistics as JSON");

    auto* srch = app.add_subcommand("search", "Search an index for a query clip");
    srch->add_option("--index", p.index, "Index file")->required();
    srch->add_option("--query", p.query, "Query WAV file")->required();
    srch->add_option("--codebook", p.codebook, "Codebook the index was built with")->required();
    srch->add_option("--theta", s.theta, "Distance threshold")->capture_default_str();
    srch->add_option("--mode", s.mode, "proposed|tas|bruteforce")->capture_default_str();
    srch->add_option("--json", p.json, "Write matches and counters as JSON");

    auto* bench = app.add_subcommand("bench", "Run all search modes and compare work and time");
    bench->add_option("--index", p.index, "Index file")->required();
    bench->add_option("--codebook", p.codebook, "Codebook the index was built with")->required();
    bench->add_option("--query", p.queries, "Query WAV files")->required();
    bench->add_option("--theta", p.thetas, "Distance thresholds");
    bench->add_option("--repeat", p.repeat, "Repetitions per measurement")->capture_default_str();
    bench->add_option("--csv", p.csv, "Write per-run counters and times as CSV");

    auto* val = app.add_subcommand("validate-index", "Load an index and check every invariant");
    val->add_option("--index", p.index, "Index file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen(s, p, out);
        if (bcb->parsed()) return cmd_build_codebook(s, p, out);
        if (bidx->parsed()) return cmd_build_index(s, p, out);
        if (srch->parsed()) return cmd_search(s, p, out);
        if (bench->parsed()) return cmd_bench(s, p, out);
        if (val->parsed()) return cmd_validate_index(s, p, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const InvariantError& e) {
        err << "invariant violation: " << e.what() << "\n";
        return kInvariant;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kDataError;
    }
    return kUsage;
}

} // namespace plsearch::cli
