#include "tg/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <ostream>

#include "tg/baselines.hpp"
#include "tg/difftest.hpp"
#include "tg/parser.hpp"
#include "tg/pipeline.hpp"
#include "tg/taint.hpp"
#include "tg/verifier.hpp"

namespace tg {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// The taint configuration next to the program file, unless overridden.
TaintConfig find_config(const std::string& override_path, const std::string& program_path) {
    if (!override_path.empty()) return load_taint_config(override_path);
    fs::path sibling = fs::path(program_path).parent_path() / "taint.json";
    if (!fs::exists(sibling))
        throw std::runtime_error("no --config given and " + sibling.string() + " does not exist");
    return load_taint_config(sibling.string());
}

/// The inputs file under inputs/<stem>.json next to the program, unless
/// given explicitly.
std::vector<TestInput> find_inputs(const std::string& override_path,
                                   const std::string& program_path) {
    if (!override_path.empty()) return load_test_inputs(override_path);
    fs::path prog(program_path);
    fs::path sibling = prog.parent_path() / "inputs" / (prog.stem().string() + ".json");
    if (!fs::exists(sibling))
        throw std::runtime_error("no inputs file given and " + sibling.string() +
                                 " does not exist");
    return load_test_inputs(sibling.string());
}

json site_json(const SinkSite& s) {
    return {{"method", s.method_key}, {"instruction", s.instr_index}};
}

int cmd_verify(const std::string& program, const std::string& config, bool as_json,
               std::ostream& out) {
    Program p = parse_program_file(program);
    TaintConfig cfg = find_config(config, program);
    VerifyReport rep = verify_program(p, cfg);
    if (as_json) {
        json j{{"program", program}, {"ok", rep.ok()}};
        auto items = [](const std::vector<VerifyIssue>& v) {
            json a = json::array();
            for (const VerifyIssue& i : v)
                a.push_back({{"method", i.method}, {"index", i.index}, {"message", i.message}});
            return a;
        };
        j["errors"] = items(rep.errors);
        j["warnings"] = items(rep.warnings);
        j["unsupported"] = items(rep.unsupported);
        out << j.dump(2) << "\n";
    } else {
        out << rep.summary();
    }
    return rep.ok() ? 0 : 1;
}

int cmd_gadgets(const std::string& program, const std::string& config, const std::string& out_dir,
                const PipelineOptions& opt, bool as_json, bool emit_baselines, std::ostream& out) {
    Program p = parse_program_file(program);
    TaintConfig cfg = find_config(config, program);
    PipelineResult pr = run_pipeline(p, cfg, opt);

    int written = 0;
    if (!out_dir.empty()) {
        written = write_artifacts(pr, out_dir);
        if (emit_baselines) {
            for (const EndpointResult& er : pr.endpoints) {
                fs::path dir = fs::path(out_dir) / sanitize_endpoint(er.endpoint.key());
                fs::create_directories(dir);
                std::ofstream fn(dir / "function.pseudo");
                for (const PseudoFunc& f : function_baseline(p, cfg, er.endpoint))
                    fn << pseudo_text(f);
                auto slices = code_gadget_baseline(p, cfg, er.endpoint);
                for (size_t i = 0; i < slices.size(); ++i) {
                    std::ofstream sf(dir / ("slice" + std::to_string(i) + ".pseudo"));
                    for (const PseudoFunc& f : slices[i].funcs) sf << pseudo_text(f);
                    written += 1;
                }
                written += 1;
            }
        }
    }

    if (as_json) {
        json eps = json::array();
        for (const EndpointResult& er : pr.endpoints) {
            json gadgets = json::array();
            for (size_t i = 0; i < er.gadgets.size(); ++i)
                gadgets.push_back({{"hash", hash_hex(er.hashes[i])},
                                   {"path", er.gadgets[i].path_id},
                                   {"site", site_json(er.gadgets[i].site)}});
            eps.push_back({{"endpoint", er.endpoint.key()},
                           {"status", endpoint_status_name(er.status)},
                           {"elapsed_ms", er.elapsed_ms},
                           {"messages", er.messages},
                           {"gadgets", gadgets}});
        }
        json j{{"program", program}, {"endpoints", eps}};
        if (!out_dir.empty()) j["files_written"] = written;
        out << j.dump(2) << "\n";
    } else {
        for (const EndpointResult& er : pr.endpoints) {
            out << er.endpoint.key() << ": " << endpoint_status_name(er.status) << ", "
                << er.gadgets.size() << (er.gadgets.size() == 1 ? " gadget" : " gadgets") << " ("
                << std::fixed << std::setprecision(1) << er.elapsed_ms << " ms)\n";
            for (size_t i = 0; i < er.gadgets.size(); ++i)
                out << "  " << hash_hex(er.hashes[i]) << "  site " << er.gadgets[i].site.method_key
                    << "#" << er.gadgets[i].site.instr_index << "  path "
                    << (er.gadgets[i].path_id.empty() ? "-" : er.gadgets[i].path_id) << "\n";
            for (const std::string& m : er.messages) out << "  note: " << m << "\n";
        }
        if (!out_dir.empty()) out << written << " files written to " << out_dir << "\n";
    }
    return 0;
}

int cmd_difftest(const std::string& program, const std::string& config,
                 const std::string& inputs_path, uint64_t seed, const PipelineOptions& opt,
                 bool as_json, std::ostream& out) {
    Program p = parse_program_file(program);
    TaintConfig cfg = find_config(config, program);
    std::vector<TestInput> inputs = find_inputs(inputs_path, program);
    if (seed != 0) {
        std::erase_if(inputs, [&](const TestInput& t) { return t.seed != seed; });
        if (inputs.empty()) throw std::runtime_error("no input with seed " + std::to_string(seed));
    }
    auto reports = difftest_program(p, cfg, inputs, opt);

    bool all = true;
    for (const DiffReport& r : reports) all = all && r.all_pass();

    if (as_json) {
        json eps = json::array();
        for (const DiffReport& r : reports) {
            json verdicts = json::array();
            for (const InputVerdict& v : r.inputs)
                verdicts.push_back({{"seed", v.seed}, {"pass", v.pass}, {"detail", v.detail}});
            eps.push_back({{"endpoint", r.endpoint.key()},
                           {"pass_rate", r.pass_rate()},
                           {"inputs", verdicts}});
        }
        out << json{{"program", program}, {"all_pass", all}, {"endpoints", eps}}.dump(2) << "\n";
    } else {
        for (const DiffReport& r : reports) {
            out << r.endpoint.key() << ": pass rate " << std::fixed << std::setprecision(2)
                << r.pass_rate() << "\n";
            for (const InputVerdict& v : r.inputs) {
                out << "  seed " << v.seed << ": " << (v.pass ? "pass" : "FAIL") << "\n";
                if (!v.pass) out << "    " << v.detail << "\n";
            }
        }
    }
    return all ? 0 : 1;
}

int cmd_classify(const std::string& program, const std::string& config, double threshold,
                 const PipelineOptions& opt, bool as_json, std::ostream& out) {
    Program p = parse_program_file(program);
    TaintConfig cfg = find_config(config, program);
    auto scores = classify_program(p, cfg, opt);

    bool flagged_any = false;
    json eps = json::array();
    for (const EndpointScore& s : scores) {
        bool flagged = s.score >= threshold;
        flagged_any = flagged_any || flagged;
        if (as_json)
            eps.push_back({{"endpoint", s.endpoint.key()},
                           {"score", s.score},
                           {"gadgets", s.gadgets},
                           {"flagged", flagged}});
        else
            out << s.endpoint.key() << ": score " << s.score << " (" << s.gadgets
                << (s.gadgets == 1 ? " gadget" : " gadgets") << ") -> "
                << (flagged ? "FLAGGED" : "clean") << "\n";
    }
    if (as_json)
        out << json{{"program", program}, {"threshold", threshold}, {"endpoints", eps}}.dump(2)
            << "\n";
    return flagged_any ? 1 : 0;
}

int cmd_stats(const std::vector<std::string>& programs, const std::string& config, bool as_json,
              std::ostream& out) {
    std::vector<ProgramStats> all;
    for (const std::string& path : programs) {
        Program p = parse_program_file(path);
        TaintConfig cfg = find_config(config, path);
        all.push_back(program_stats(fs::path(path).stem().string(), p, cfg));
    }
    AggregateStats agg = aggregate_stats(std::move(all));

    if (as_json) {
        json progs = json::array();
        for (const ProgramStats& st : agg.programs)
            progs.push_back({{"program", st.program},
                             {"trace_gadget_tokens", st.tg_tokens},
                             {"code_gadget_tokens", st.cg_tokens},
                             {"function_tokens", st.fn_tokens},
                             {"gadgets", st.gadget_count},
                             {"sites", st.site_count},
                             {"reduction", st.reduction()}});
        out << json{{"programs", progs}, {"median_reduction", agg.median_reduction}}.dump(2)
            << "\n";
    } else {
        out << std::left << std::setw(10) << "program" << std::right << std::setw(8) << "trace"
            << std::setw(8) << "slice" << std::setw(8) << "func" << std::setw(12) << "reduction"
            << "\n"
            << std::fixed << std::setprecision(1);
        for (const ProgramStats& st : agg.programs)
            out << std::left << std::setw(10) << st.program << std::right << std::setw(8)
                << st.tg_tokens << std::setw(8) << st.cg_tokens << std::setw(8) << st.fn_tokens
                << std::setw(11) << std::fixed << std::setprecision(1) << st.reduction() * 100.0
                << "%\n";
        out << "median reduction vs statement slices: " << std::fixed << std::setprecision(1)
            << agg.median_reduction * 100.0 << "%\n";
    }
    return 0;
}

} // namespace

int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"trace-gadget extraction for GASM bytecode programs"};
    app.require_subcommand(1);

    std::string config, out_dir, inputs_path;
    std::string program;
    std::vector<std::string> programs;
    bool as_json = false, emit_baselines = false;
    double threshold = 0.5;
    uint64_t seed = 0;
    PipelineOptions opt;

    auto add_common = [&](CLI::App* c) {
        c->add_option("--config", config, "taint configuration (default: taint.json beside the program)");
        c->add_flag("--json", as_json, "machine-readable output");
    };
    auto add_limits = [&](CLI::App* c) {
        c->add_option("--timeout-secs", opt.limits.time_budget_secs, "emulation time budget per endpoint");
        c->add_option("--max-instr", opt.limits.max_instructions, "emulated instruction budget");
        c->add_option("--max-states", opt.limits.max_states, "forked state budget");
        c->add_option("--jobs", opt.jobs, "endpoints processed in parallel");
    };

    CLI::App* verify = app.add_subcommand("verify", "parse and verify a program");
    verify->add_option("program", program, "GASM source file")->required();
    add_common(verify);

    CLI::App* gadgets = app.add_subcommand("gadgets", "extract trace gadgets");
    gadgets->add_option("program", program, "GASM source file")->required();
    gadgets->add_option("--out", out_dir, "directory for .gasm/.pseudo artifacts");
    gadgets->add_flag("--emit-baselines", emit_baselines,
                      "also write function and slice renderings");
    add_common(gadgets);
    add_limits(gadgets);

    CLI::App* difftest = app.add_subcommand("difftest", "replay gadgets against the program");
    difftest->add_option("program", program, "GASM source file")->required();
    difftest->add_option("inputs", inputs_path,
                         "test inputs (default: inputs/<stem>.json beside the program)");
    difftest->add_option("--seed", seed, "replay only the input with this seed (0 = all)");
    add_common(difftest);
    add_limits(difftest);

    CLI::App* classify = app.add_subcommand("classify", "taint-score the extracted gadgets");
    classify->add_option("program", program, "GASM source file")->required();
    classify->add_option("--threshold", threshold, "flagging threshold on the endpoint score");
    add_common(classify);
    add_limits(classify);

    CLI::App* stats = app.add_subcommand("stats", "compare gadget sizes against baselines");
    stats->add_option("programs", programs, "GASM source files")->required();
    add_common(stats);

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(verify)) return cmd_verify(program, config, as_json, out);
        if (app.got_subcommand(gadgets))
            return cmd_gadgets(program, config, out_dir, opt, as_json, emit_baselines, out);
        if (app.got_subcommand(difftest))
            return cmd_difftest(program, config, inputs_path, seed, opt, as_json, out);
        if (app.got_subcommand(classify))
            return cmd_classify(program, config, threshold, opt, as_json, out);
        if (app.got_subcommand(stats)) return cmd_stats(programs, config, as_json, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}

} // namespace tg
