#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "tg/parser.hpp"
#include "tg/taint.hpp"

using namespace tg;

namespace {

std::string corpus_path(const std::string& stem) {
    return std::string(TG_CORPUS_DIR) + "/" + stem + ".gasm";
}

TaintConfig corpus_config() {
    return load_taint_config(std::string(TG_CORPUS_DIR) + "/taint.json");
}

std::vector<std::string> read_set(const std::string& name) {
    std::ifstream f(std::string(TG_CORPUS_DIR) + "/sets/" + name + ".list");
    REQUIRE(f.good());
    std::vector<std::string> stems;
    std::string line;
    while (std::getline(f, line))
        if (!line.empty()) stems.push_back(line);
    return stems;
}

std::map<std::string, bool> read_labels() {
    std::ifstream f(std::string(TG_CORPUS_DIR) + "/labels.json");
    REQUIRE(f.good());
    nlohmann::json j = nlohmann::json::parse(f);
    std::map<std::string, bool> labels;
    for (auto& [k, v] : j.items()) labels[k] = v.get<bool>();
    return labels;
}

std::vector<Gadget> gadgets_for(const std::string& stem) {
    Program p = parse_program_file(corpus_path(stem));
    PipelineResult pr = run_pipeline(p, corpus_config());
    REQUIRE(pr.endpoints.size() == 1);
    return pr.endpoints[0].gadgets;
}

/// Re-scores a gadget after a textual edit of its program.
double rescore(Gadget g, const std::string& text, const TaintConfig& cfg) {
    g.gasm_text = text;
    g.program = parse_program(text);
    return gadget_taint_score(g, cfg);
}

/// Parses `text` and wraps the named method as a synthetic gadget.
Gadget synthetic(const std::string& text, const MethodId& entry) {
    Gadget g;
    g.gasm_text = text;
    g.program = parse_program(text);
    g.entry = entry;
    return g;
}

} // namespace

TEST_CASE("labelled corpus classifies perfectly at the 0.5 threshold") {
    TaintConfig cfg = corpus_config();
    auto labels = read_labels();
    std::vector<Sample> samples;
    for (const std::string& stem : read_set("classify")) {
        CAPTURE(stem);
        Program p = parse_program_file(corpus_path(stem));
        auto scores = classify_program(p, cfg);
        REQUIRE(scores.size() == 1);
        auto it = labels.find(scores[0].endpoint.key());
        REQUIRE(it != labels.end());
        samples.push_back({it->first, it->second, scores[0].score});
    }
    REQUIRE(samples.size() == 16);
    Metrics m = evaluate(samples, 0.5);
    CHECK(m.tp == 11);
    CHECK(m.tn == 5);
    CHECK(m.fp == 0);
    CHECK(m.fn == 0);
    CHECK(m.tpr() == 1.0);
    CHECK(m.fpr() == 0.0);
}

TEST_CASE("benign gadgets score zero: sanitized or constant sink arguments") {
    TaintConfig cfg = corpus_config();
    // ex7/exb2 sanitize the parameter; ex4's recursion base sinks a constant.
    for (std::string stem : {"ex7", "exb2", "ex4"}) {
        CAPTURE(stem);
        auto gs = gadgets_for(stem);
        REQUIRE(!gs.empty());
        for (const Gadget& g : gs) CHECK(gadget_taint_score(g, cfg) == 0.0);
    }
}

TEST_CASE("endpoints without gadgets score zero") {
    TaintConfig cfg = corpus_config();
    // ex8's sink arm is pruned by the constant guard; exb1 sinks without a
    // preceding source call, so no trace is sink-relevant.
    for (std::string stem : {"ex8", "exb1"}) {
        CAPTURE(stem);
        Program p = parse_program_file(corpus_path(stem));
        auto scores = classify_program(p, cfg);
        REQUIRE(scores.size() == 1);
        CHECK(scores[0].gadgets == 0);
        CHECK(scores[0].score == 0.0);
    }
}

TEST_CASE("stripping the sanitizer call flips a benign gadget to vulnerable") {
    TaintConfig cfg = corpus_config();
    auto gs = gadgets_for("ex7");
    REQUIRE(gs.size() == 1);
    REQUIRE(gadget_taint_score(gs[0], cfg) == 0.0);

    std::string text = gs[0].gasm_text;
    size_t pos = text.find("invoke.static Esc.sqlEscape/1");
    REQUIRE(pos != std::string::npos);
    size_t bol = text.rfind('\n', pos);
    size_t eol = text.find('\n', pos);
    text.erase(bol, eol - bol);
    CHECK(rescore(gs[0], text, cfg) == 1.0);
}

TEST_CASE("inserting a sanitizer call flips a vulnerable gadget to benign") {
    TaintConfig cfg = corpus_config();
    auto gs = gadgets_for("ex2");
    REQUIRE(gs.size() == 1);
    REQUIRE(gadget_taint_score(gs[0], cfg) == 1.0);

    std::string text = gs[0].gasm_text;
    size_t pos = text.find("invoke.virtual Request.getParameter/2");
    REQUIRE(pos != std::string::npos);
    size_t eol = text.find('\n', pos);
    std::string patched = text.substr(0, eol) + "\n    invoke.static Esc.sqlEscape/1" +
                          text.substr(eol);
    // The escape routine is not declared in the gadget's copied classes; add it.
    patched += "\nclass Esc extern\n  method static sqlEscape/1 extern\nend\n";
    CHECK(rescore(gs[0], patched, cfg) == 0.0);
}

TEST_CASE("taint flows through statics, fields and helper methods") {
    TaintConfig cfg = corpus_config();
    const std::string common = R"(
class Request extern
  method getParameter/2 extern
end
class DB extern
  method static executeUpdate/1 extern
end
)";

    SUBCASE("through a static field") {
        Gadget g = synthetic(common + R"(
class T
  static tmp
  method static run/1
    param 0 : Request
    load 0
    const.str "q"
    invoke.virtual Request.getParameter/2
    putstatic T.tmp
    getstatic T.tmp
    invoke.static DB.executeUpdate/1
    return
  end
end
)",
                             {"T", "run", 1});
        CHECK(gadget_taint_score(g, cfg) == 1.0);
    }

    SUBCASE("store after load still counts: the analysis iterates") {
        Gadget g = synthetic(common + R"(
class T
  static tmp
  method static run/1
    param 0 : Request
    getstatic T.tmp
    store 1
    load 0
    const.str "q"
    invoke.virtual Request.getParameter/2
    putstatic T.tmp
    load 1
    invoke.static DB.executeUpdate/1
    return
  end
end
)",
                             {"T", "run", 1});
        // Flow-insensitive over statics: the early read observes the later
        // tainted store, mirroring a second call of the same endpoint.
        CHECK(gadget_taint_score(g, cfg) == 1.0);
    }

    SUBCASE("through an instance field") {
        Gadget g = synthetic(common + R"(
class Box
  field v
end
class T
  method static run/1
    param 0 : Request
    new Box
    store 1
    load 1
    load 0
    const.str "q"
    invoke.virtual Request.getParameter/2
    putfield Box.v
    load 1
    getfield Box.v
    invoke.static DB.executeUpdate/1
    return
  end
end
)",
                             {"T", "run", 1});
        CHECK(gadget_taint_score(g, cfg) == 1.0);
    }

    SUBCASE("through a bodied helper's return value") {
        Gadget g = synthetic(common + R"(
class T
  method static fetch/1
    param 0 : Request
    load 0
    const.str "q"
    invoke.virtual Request.getParameter/2
    return.val
  end
  method static run/1
    param 0 : Request
    load 0
    invoke.static T.fetch/1
    invoke.static DB.executeUpdate/1
    return
  end
end
)",
                             {"T", "run", 1});
        CHECK(gadget_taint_score(g, cfg) == 1.0);
    }

    SUBCASE("a helper that launders through recursion still converges") {
        Gadget g = synthetic(common + R"(
class T
  method static spin/2
    param 1 : Request
    load 0
    ifz Ldone
    load 0
    const.int 1
    sub
    load 1
    invoke.static T.spin/2
    return.val
  Ldone:
    load 1
    const.str "q"
    invoke.virtual Request.getParameter/2
    return.val
  end
  method static run/1
    param 0 : Request
    const.int 3
    load 0
    invoke.static T.spin/2
    invoke.static DB.executeUpdate/1
    return
  end
end
)",
                             {"T", "run", 1});
        CHECK(gadget_taint_score(g, cfg) == 1.0);
    }

    SUBCASE("sink inside the helper is still observed") {
        Gadget g = synthetic(common + R"(
class T
  method static emit/1
    load 0
    invoke.static DB.executeUpdate/1
    return
  end
  method static run/1
    param 0 : Request
    load 0
    const.str "q"
    invoke.virtual Request.getParameter/2
    invoke.static T.emit/1
    return
  end
end
)",
                             {"T", "run", 1});
        CHECK(gadget_taint_score(g, cfg) == 1.0);
    }

    SUBCASE("constant arguments never taint the sink") {
        Gadget g = synthetic(common + R"(
class T
  method static run/1
    param 0 : Request
    load 0
    const.str "q"
    invoke.virtual Request.getParameter/2
    pop
    const.str "DELETE FROM audit"
    invoke.static DB.executeUpdate/1
    return
  end
end
)",
                             {"T", "run", 1});
        CHECK(gadget_taint_score(g, cfg) == 0.0);
    }
}

TEST_CASE("evaluate tallies the confusion quadrants") {
    std::vector<Sample> s = {
        {"a", true, 1.0},  // tp
        {"b", true, 0.0},  // fn
        {"c", false, 1.0}, // fp
        {"d", false, 0.0}, // tn
        {"e", false, 0.4}, // tn: below threshold
        {"f", true, 0.5},  // tp: at threshold counts as flagged
    };
    Metrics m = evaluate(s, 0.5);
    CHECK(m.tp == 2);
    CHECK(m.fn == 1);
    CHECK(m.fp == 1);
    CHECK(m.tn == 2);
    CHECK(m.tpr() == doctest::Approx(2.0 / 3.0));
    CHECK(m.fpr() == doctest::Approx(1.0 / 3.0));
    CHECK(evaluate({}, 0.5).tpr() == 1.0);
    CHECK(evaluate({}, 0.5).fpr() == 0.0);
}

TEST_CASE("classification is deterministic") {
    TaintConfig cfg = corpus_config();
    Program p = parse_program_file(corpus_path("ex1"));
    auto a = classify_program(p, cfg);
    auto b = classify_program(p, cfg);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].endpoint.key() == b[i].endpoint.key());
        CHECK(a[i].score == b[i].score);
        CHECK(a[i].gadgets == b[i].gadgets);
    }
}
