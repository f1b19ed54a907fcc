#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "tg/config.hpp"
#include "tg/emulator.hpp"
#include "tg/hierarchy.hpp"
#include "tg/parser.hpp"

using namespace tg;

namespace {

std::string corpus_path(const std::string& stem) {
    return std::string(TG_CORPUS_DIR) + "/" + stem + ".gasm";
}

TaintConfig corpus_config() {
    return load_taint_config(std::string(TG_CORPUS_DIR) + "/taint.json");
}

struct Fixture {
    Program p;
    TaintConfig cfg;
    MethodId ep;
    Scope scope;
};

Fixture load(const std::string& stem) {
    Fixture f;
    f.p = parse_program_file(corpus_path(stem));
    f.cfg = corpus_config();
    auto eps = identify_endpoints(f.p, f.cfg);
    REQUIRE(eps.size() == 1);
    f.ep = eps[0];
    f.scope = global_slice(f.p, f.cfg, f.ep, CallMode::Cha);
    return f;
}

EmuResult emulate(const Fixture& f, EmuLimits lim = {}, ForkPolicy pol = ForkPolicy::Fifo) {
    return emulate_endpoint(f.p, f.cfg, f.ep, f.scope, lim, pol);
}

} // namespace

TEST_CASE("branch classification: two arms, guard, loop") {
    auto shape_at = [](const std::string& stem, const std::string& cls,
                       const std::string& name, int arity, int pc) {
        Program p = parse_program_file(corpus_path(stem));
        const MethodDef* m = p.find_class(cls)->find_method(name, arity);
        REQUIRE(m != nullptr);
        REQUIRE(m->body.at(pc).op == Op::Ifz);
        return classify_branch(*m, pc);
    };
    BranchInfo b1 = shape_at("ex1", "Ex1", "doGet", 2, 3);
    CHECK(b1.shape == BranchShape::TwoSided);
    CHECK(b1.close_pc == 11);

    BranchInfo b5 = shape_at("ex5", "Ex5", "doGet", 2, 7);
    CHECK(b5.shape == BranchShape::OneSided);
    CHECK(b5.close_pc == 10);

    BranchInfo b3 = shape_at("ex3", "Ex3", "doGet", 2, 20);
    CHECK(b3.shape == BranchShape::BackEdge);

    BranchInfo b10 = shape_at("ex10", "Ex10", "doGet", 2, 5);
    CHECK(b10.shape == BranchShape::TwoSided);
    CHECK(b10.close_pc == 11); // return-terminated arm: arms never rejoin

    BranchInfo b4 = shape_at("ex4", "Ex4", "norm", 1, 1);
    CHECK(b4.shape == BranchShape::TwoSided);
    CHECK(b4.close_pc == 8);
}

TEST_CASE("straight-line call: steps, producer links and the sink record") {
    Fixture f = load("ex2");
    EmuResult r = emulate(f);
    CHECK(r.status == EndpointStatus::Ok);
    REQUIRE(r.traces.size() == 1);
    const Trace& t = r.traces[0];
    CHECK(t.endpoint_key == "Ex2.doGet/1");
    REQUIRE(t.steps.size() == 10);
    CHECK(t.sink_step == 9);
    CHECK(t.site == SinkSite{"Ex2.runQuery/1", 5});
    CHECK(t.source_steps == std::vector<int>{2});

    CHECK(t.steps[2].is_source);
    CHECK(t.steps[2].ins.mref.key() == "Request.getParameter/2");
    // The call into the helper carries no data deps of its own...
    CHECK(t.steps[3].deps.empty());
    REQUIRE(t.steps[3].arg_producers.size() == 1);
    CHECK(t.steps[3].arg_producers[0] == std::vector<int>{2});
    // ...the callee's load pulls the caller-side producer instead.
    CHECK(t.steps[5].ins.op == Op::Load);
    CHECK(t.steps[5].deps == std::vector<int>{2});
    CHECK(t.steps[5].frame_uid == 1);
    CHECK(t.steps[5].invoke_step == 3);
    CHECK(t.steps[9].is_sink);
    CHECK(t.steps[9].deps == std::vector<int>{8});
    CHECK(t.notes.empty());
}

TEST_CASE("two-sided branch forks into one trace per arm") {
    Fixture f = load("ex1");
    EmuResult r = emulate(f);
    CHECK(r.status == EndpointStatus::Ok);
    REQUIRE(r.traces.size() == 2);
    const Trace& a = r.traces[0]; // fall-through arm first: path "0" < "1"
    const Trace& b = r.traces[1];
    CHECK(a.path_id == "0");
    CHECK(b.path_id == "1");
    CHECK(a.site == SinkSite{"Ex1.doGet/2", 14});
    CHECK(b.site == a.site);

    REQUIRE(a.steps.size() == 13);
    CHECK(a.steps[6].is_source); // second getParameter call, then-arm only
    CHECK(a.source_steps == std::vector<int>{2, 6});
    REQUIRE(a.notes.size() == 1);
    CHECK(a.notes[0] == BranchNote{3, 4, 9, BranchShape::TwoSided, false, false});

    REQUIRE(b.steps.size() == 10);
    CHECK(b.steps[4].ins.op == Op::ConstStr);
    CHECK(b.steps[4].ins.str_val == "DEFAULT");
    CHECK(b.source_steps == std::vector<int>{2});
    REQUIRE(b.notes.size() == 1);
    CHECK(b.notes[0] == BranchNote{3, 4, 6, BranchShape::TwoSided, true, false});
}

TEST_CASE("one-sided guard stays on one path and joins written slots") {
    Fixture f = load("ex5");
    EmuResult r = emulate(f);
    CHECK(r.status == EndpointStatus::Ok);
    REQUIRE(r.traces.size() == 1);
    const Trace& t = r.traces[0];
    CHECK(t.path_id == ""); // no fork happened
    REQUIRE(t.steps.size() == 18);
    CHECK(t.sink_step == 17);
    REQUIRE(t.notes.size() == 1);
    CHECK(t.notes[0] == BranchNote{7, 8, 10, BranchShape::OneSided, false, false});
    // After the join the reload sees both the original store and the
    // guarded overwrite.
    CHECK(t.steps[11].ins.op == Op::Load);
    CHECK(t.steps[11].deps == std::vector<int>{3, 9});
}

TEST_CASE("back edges fork a skip path and a run-once path") {
    Fixture f = load("ex3");
    EmuResult r = emulate(f);
    CHECK(r.status == EndpointStatus::Ok);
    REQUIRE(r.traces.size() == 2);

    const Trace& skip = r.traces[0];
    CHECK(skip.path_id == "0");
    REQUIRE(skip.steps.size() == 15);
    CHECK(skip.sink_step == 14);
    REQUIRE(skip.notes.size() == 1);
    CHECK(skip.notes[0] == BranchNote{12, 13, 13, BranchShape::BackEdge, false, false});
    // The loop was skipped: the sink reads only the initial store.
    CHECK(skip.steps[13].ins.op == Op::Load);
    CHECK(skip.steps[13].deps == std::vector<int>{5});

    const Trace& once = r.traces[1];
    CHECK(once.path_id == "1");
    REQUIRE(once.steps.size() == 27);
    CHECK(once.sink_step == 26);
    REQUIRE(once.notes.size() == 1);
    // The region spans the body plus the re-test, including the second ifz.
    CHECK(once.notes[0] == BranchNote{12, 13, 25, BranchShape::BackEdge, true, false});
    CHECK(once.steps[24].ins.op == Op::Ifz);
    // Post-loop reads join the pre-loop and in-loop writers.
    CHECK(once.steps[25].ins.op == Op::Load);
    CHECK(once.steps[25].deps == std::vector<int>{5, 16});
}

TEST_CASE("constant guards are pruned instead of forked") {
    Fixture f = load("ex8");
    EmuResult r = emulate(f);
    CHECK(r.status == EndpointStatus::Ok);
    CHECK(r.traces.empty()); // the false guard hides the only sink
}

TEST_CASE("a throwing arm flags the endpoint but keeps the other arm's trace") {
    Fixture f = load("ex10");
    EmuResult r = emulate(f);
    CHECK(r.status == EndpointStatus::Throw);
    REQUIRE(r.traces.size() == 1);
    CHECK(r.traces[0].path_id == "0");
    CHECK(r.traces[0].sink_step == 7);
    REQUIRE(!r.messages.empty());
    CHECK(r.messages[0].find("throw") != std::string::npos);
}

TEST_CASE("recursion cuts the path; the base arm still reaches the sink") {
    Fixture f = load("ex4");
    REQUIRE(f.scope.contains({"Ex4", "norm", 1})); // the sink lives inside it
    EmuResult r = emulate(f);
    CHECK(r.status == EndpointStatus::Ok);
    REQUIRE(r.traces.size() == 1);
    const Trace& t = r.traces[0];
    CHECK(t.path_id == "1"); // the non-recursive arm
    REQUIRE(t.steps.size() == 10);
    CHECK(t.site == SinkSite{"Ex4.norm/1", 6});
    CHECK(t.steps[8].ins.op == Op::ConstStr);
    CHECK(t.steps[8].ins.str_val == "EMPTY");
    CHECK(t.steps[9].is_sink);
    CHECK(t.steps[9].deps == std::vector<int>{8});
    REQUIRE(t.notes.size() == 1);
    CHECK(t.notes[0] == BranchNote{7, 8, 10, BranchShape::TwoSided, true, false});
}

TEST_CASE("calls leading away from every sink are treated as opaque externs") {
    // app.core.Util.esc/1 is reachable but cannot reach a sink: the call
    // must act like an unknown extern rather than being followed.
    Fixture f = load("exns");
    CHECK(!f.scope.contains({"app.core.Util", "esc", 1}));
    EmuResult r = emulate(f);
    CHECK(r.status == EndpointStatus::Ok);
    REQUIRE(r.traces.size() == 1);
    for (const auto& s : r.traces[0].steps)
        CHECK(s.method.cls != "app.core.Util");
}

TEST_CASE("interface dispatch with a concrete receiver follows the body") {
    Fixture f = load("ex6");
    EmuResult r = emulate(f);
    CHECK(r.status == EndpointStatus::Ok);
    REQUIRE(r.traces.size() == 1);
    const Trace& t = r.traces[0];
    REQUIRE(t.steps.size() == 11);
    CHECK(t.site == SinkSite{"C.render/2", 1});
    CHECK(t.steps[8].ins.op == Op::InvokeInterface);
    CHECK(t.steps[8].deps.empty());
    REQUIRE(t.steps[8].arg_producers.size() == 2);
    CHECK(t.steps[8].arg_producers[0] == std::vector<int>{6});
    CHECK(t.steps[8].arg_producers[1] == std::vector<int>{7});
    CHECK(t.steps[9].ins.op == Op::Load);
    CHECK(t.steps[9].deps == std::vector<int>{7}); // callee arg 1 <- caller load
}

TEST_CASE("ambiguous dispatch on an opaque receiver is an error") {
    Fixture f = load("exe1");
    EmuResult r = emulate(f);
    CHECK(r.status == EndpointStatus::Error);
    CHECK(r.traces.empty());
    REQUIRE(!r.messages.empty());
    CHECK(r.messages[0].find("ambiguous") != std::string::npos);
}

TEST_CASE("two sink sites on one path yield two truncated traces") {
    Fixture f = load("exm1");
    EmuResult r = emulate(f);
    CHECK(r.status == EndpointStatus::Ok);
    REQUIRE(r.traces.size() == 2);
    CHECK(r.traces[0].site == SinkSite{"Exm1.doGet/2", 5});
    CHECK(r.traces[0].sink_step == 5);
    CHECK(r.traces[0].steps.size() == 6);
    CHECK(r.traces[1].site == SinkSite{"Exm1.doGet/2", 11});
    CHECK(r.traces[1].sink_step == 11);
    CHECK(r.traces[1].steps.size() == 12);
}

TEST_CASE("static initializers run before the first static read") {
    Fixture f = load("ex9");
    EmuResult r = emulate(f);
    CHECK(r.status == EndpointStatus::Ok);
    REQUIRE(r.traces.size() == 1);
    const Trace& t = r.traces[0];
    REQUIRE(t.steps.size() == 19);
    CHECK(t.steps[5].method.key() == "Ex9Cfg.<clinit>/0");
    CHECK(t.steps[5].invoke_step == -1);
    CHECK(t.steps[6].ins.op == Op::PutStatic);
    CHECK(t.steps[8].ins.op == Op::GetStatic);
    CHECK(t.steps[8].deps == std::vector<int>{6}); // reads the clinit's write
    CHECK(t.sink_step == 18);
}

TEST_CASE("state explosion is reported as a timeout") {
    Fixture f = load("ext1");
    EmuResult r = emulate(f);
    CHECK(r.status == EndpointStatus::Timeout);
    CHECK(r.traces.empty());
    CHECK(r.executed_instructions <= EmuLimits{}.max_instructions);
}

TEST_CASE("a tiny instruction budget reports a timeout") {
    Fixture f = load("ex2");
    EmuLimits lim;
    lim.max_instructions = 5;
    EmuResult r = emulate(f, lim);
    CHECK(r.status == EndpointStatus::Timeout);
    CHECK(r.traces.empty());
}

TEST_CASE("trace sets are identical under FIFO and LIFO scheduling") {
    for (const std::string stem :
         {"ex1", "ex2", "ex3", "ex4", "ex5", "ex6", "ex8", "ex9", "ex10", "exm1"}) {
        CAPTURE(stem);
        Fixture f = load(stem);
        EmuResult fifo = emulate(f, {}, ForkPolicy::Fifo);
        EmuResult lifo = emulate(f, {}, ForkPolicy::Lifo);
        CHECK(fifo.status == lifo.status);
        CHECK(fifo.traces == lifo.traces);
    }
}

TEST_CASE("emulation is deterministic") {
    for (const std::string stem : {"ex1", "ex3", "ex9"}) {
        CAPTURE(stem);
        Fixture f = load(stem);
        EmuResult r1 = emulate(f);
        EmuResult r2 = emulate(f);
        CHECK(r1.traces == r2.traces);
        CHECK(r1.executed_instructions == r2.executed_instructions);
    }
}
