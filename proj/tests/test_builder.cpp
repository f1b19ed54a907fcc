#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "tg/assembler.hpp"
#include "tg/config.hpp"
#include "tg/emulator.hpp"
#include "tg/hierarchy.hpp"
#include "tg/parser.hpp"
#include "tg/printer.hpp"
#include "tg/pseudo.hpp"
#include "tg/slicer.hpp"
#include "tg/verifier.hpp"

using namespace tg;

namespace {

std::string corpus_path(const std::string& stem) {
    return std::string(TG_CORPUS_DIR) + "/" + stem + ".gasm";
}

TaintConfig corpus_config() {
    return load_taint_config(std::string(TG_CORPUS_DIR) + "/taint.json");
}

std::vector<Gadget> gadgets_for(const Program& p) {
    TaintConfig cfg = corpus_config();
    auto eps = identify_endpoints(p, cfg);
    REQUIRE(eps.size() == 1);
    Scope scope = global_slice(p, cfg, eps[0], CallMode::Cha);
    EmuResult r = emulate_endpoint(p, cfg, eps[0], scope);
    std::vector<Gadget> out;
    for (const Trace& t : r.traces)
        out.push_back(assemble_gadget(p, t, slice_trace(t)));
    return out;
}

std::vector<Gadget> gadgets_for_file(const std::string& stem) {
    return gadgets_for(parse_program_file(corpus_path(stem)));
}

// The TG class block alone: everything before the first blank line.
std::string tg_block(const Gadget& g) {
    auto pos = g.gasm_text.find("\n\n");
    return pos == std::string::npos ? g.gasm_text : g.gasm_text.substr(0, pos + 1);
}

int count_calls(const Gadget& g, const std::string& key) {
    const ClassDef* tg = g.program.find_class("TG");
    REQUIRE(tg != nullptr);
    int count = 0;
    for (const auto& [sig, def] : tg->methods)
        for (const Instruction& ins : def.body)
            if ((ins.op == Op::InvokeStatic || ins.op == Op::InvokeVirtual ||
                 ins.op == Op::InvokeInterface) &&
                ins.mref.key() == key)
                ++count;
    return count;
}

} // namespace

TEST_CASE("two-sided endpoint: one gadget per arm, log call gone") {
    auto gs = gadgets_for_file("ex1");
    REQUIRE(gs.size() == 2);

    CHECK(gs[0].path_id == "0");
    CHECK(tg_block(gs[0]) == R"gasm(class TG
  method static TG/2
    param 0 : Request
    param 1 : Response
    load 0
    const.str "A"
    invoke.virtual Request.getParameter/2
    ifz L0
    load 0
    const.str "A"
    invoke.virtual Request.getParameter/2
    store 2
  L0:
    load 2
    invoke.static DB.executeUpdate/1
    return
  end
end
)gasm");

    CHECK(gs[1].path_id == "1");
    CHECK(tg_block(gs[1]) == R"gasm(class TG
  method static TG/2
    param 0 : Request
    param 1 : Response
    load 0
    const.str "A"
    invoke.virtual Request.getParameter/2
    ifz L0
    goto L1
  L0:
    const.str "DEFAULT"
    store 2
  L1:
    load 2
    invoke.static DB.executeUpdate/1
    return
  end
end
)gasm");

    for (const Gadget& g : gs) {
        CHECK(g.program.find_class("Log") == nullptr);
        CHECK(g.program.classes.size() == 4); // TG, DB, Request, Response
        CHECK(count_calls(g, "Log.debug/1") == 0);
    }
}

TEST_CASE("inlined helper: flat body with an argument store") {
    auto gs = gadgets_for_file("ex2");
    REQUIRE(gs.size() == 1);
    CHECK(tg_block(gs[0]) == R"gasm(class TG
  method static TG/1
    param 0 : Request
    load 0
    const.str "q"
    invoke.virtual Request.getParameter/2
    store 1
    const.str "INSERT INTO t VALUES ('"
    load 1
    concat
    const.str "')"
    concat
    invoke.static DB.executeUpdate/1
    return
  end
end
)gasm");
    CHECK(gs[0].program.classes.size() == 3); // TG, DB, Request
}

TEST_CASE("one-sided guard survives with both assignments") {
    auto gs = gadgets_for_file("ex5");
    REQUIRE(gs.size() == 1);
    CHECK(tg_block(gs[0]) == R"gasm(class TG
  method static TG/2
    param 0 : Request
    param 1 : Response
    load 0
    const.str "BT"
    invoke.virtual Request.getParameter/2
    store 2
    load 2
    const.null
    cmp.eq
    ifz L0
    const.str ""
    store 2
  L0:
    const.str "INSERT INTO messages VALUES ('"
    load 2
    concat
    const.str "')"
    concat
    store 3
    load 3
    invoke.static DB.executeUpdate/1
    return
  end
end
)gasm");
}

TEST_CASE("skipped loop collapses; taken loop comes back as a real loop") {
    auto gs = gadgets_for_file("ex3");
    REQUIRE(gs.size() == 2);

    CHECK(gs[0].path_id == "0");
    CHECK(tg_block(gs[0]) == R"gasm(class TG
  method static TG/2
    param 0 : Request
    param 1 : Response
    const.str ""
    store 2
    load 2
    invoke.static DB.executeUpdate/1
    return
  end
end
)gasm");

    CHECK(gs[1].path_id == "1");
    CHECK(tg_block(gs[1]) == R"gasm(class TG
  method static TG/2
    param 0 : Request
    param 1 : Response
    load 0
    const.str "n"
    invoke.virtual Request.getParameter/2
    store 2
    const.str ""
    store 3
    const.int 0
    store 4
    load 4
    const.int 2
    cmp.eq
    ifz L0
    goto L1
  L0:
    load 3
    load 2
    concat
    store 3
    load 4
    const.int 1
    add
    store 4
    load 4
    const.int 2
    cmp.eq
    ifz L0
  L1:
    load 3
    invoke.static DB.executeUpdate/1
    return
  end
end
)gasm");
}

TEST_CASE("recursive helper: guard shape around the constant arm") {
    auto gs = gadgets_for_file("ex4");
    REQUIRE(gs.size() == 1);
    CHECK(tg_block(gs[0]) == R"gasm(class TG
  method static TG/2
    param 0 : Request
    param 1 : Response
    load 0
    const.str "d"
    invoke.virtual Request.getParameter/2
    store 2
    load 2
    store 3
    load 3
    ifz L0
    goto L1
  L0:
    const.str "EMPTY"
    invoke.static DB.executeUpdate/1
  L1:
    return
  end
end
)gasm");
}

TEST_CASE("interface call inlined: receiver chain absent from the gadget") {
    auto gs = gadgets_for_file("ex6");
    REQUIRE(gs.size() == 1);
    CHECK(tg_block(gs[0]) == R"gasm(class TG
  method static TG/2
    param 0 : Request
    param 1 : Response
    load 0
    const.str "q"
    invoke.virtual Request.getParameter/2
    store 2
    load 2
    store 3
    load 3
    invoke.static DB.executeUpdate/1
    return
  end
end
)gasm");
    CHECK(gs[0].program.find_class("C") == nullptr);
    CHECK(gs[0].program.find_class("I") == nullptr);
}

TEST_CASE("static initialiser inlined; its class copied without <clinit>") {
    auto gs = gadgets_for_file("ex9");
    REQUIRE(gs.size() == 1);
    CHECK(tg_block(gs[0]) == R"gasm(class TG
  method static TG/2
    param 0 : Request
    param 1 : Response
    load 0
    const.str "v"
    invoke.virtual Request.getParameter/2
    store 2
    const.str "INSERT INTO "
    const.str "users"
    putstatic Ex9Cfg.table
    getstatic Ex9Cfg.table
    concat
    const.str " VALUES ('"
    concat
    load 2
    concat
    const.str "')"
    concat
    store 3
    load 3
    invoke.static DB.executeUpdate/1
    return
  end
end
)gasm");
    const ClassDef* cfgcls = gs[0].program.find_class("Ex9Cfg");
    REQUIRE(cfgcls != nullptr);
    CHECK(!cfgcls->is_extern);
    CHECK(cfgcls->static_fields == std::vector<std::string>{"table"});
    CHECK(cfgcls->methods.empty());
}

TEST_CASE("surviving arm of a throwing endpoint keeps its guard") {
    auto gs = gadgets_for_file("ex10");
    REQUIRE(gs.size() == 1);
    CHECK(tg_block(gs[0]) == R"gasm(class TG
  method static TG/2
    param 0 : Request
    param 1 : Response
    load 0
    const.str "x"
    invoke.virtual Request.getParameter/2
    store 2
    load 2
    ifz L0
    load 2
    invoke.static DB.executeUpdate/1
  L0:
    return
  end
end
)gasm");
}

TEST_CASE("two sites: the later gadget does not call the earlier site") {
    auto gs = gadgets_for_file("exm1");
    REQUIRE(gs.size() == 2);
    CHECK(count_calls(gs[0], "DB.executeUpdate/1") == 1);
    CHECK(count_calls(gs[1], "DB.executeUpdate/1") == 1);
    CHECK(tg_block(gs[1]) == R"gasm(class TG
  method static TG/2
    param 0 : Request
    param 1 : Response
    load 0
    const.str "id"
    invoke.virtual Request.getParameter/2
    store 2
    const.str "DELETE FROM audit WHERE id = "
    load 2
    concat
    store 3
    load 3
    invoke.static DB.executeUpdate/1
    return
  end
end
)gasm");
}

TEST_CASE("same site twice: the later gadget replays both calls") {
    Program p = parse_program(R"gasm(
class Request extern
  method getParameter/2 extern
end
class Response extern
end
class DB extern
  method static executeUpdate/1 extern
end
class M2
  method static doGet/2
    param 0 : Request
    param 1 : Response
    load 0
    const.str "a"
    invoke.virtual Request.getParameter/2
    store 2
    load 2
    invoke.static M2.put/1
    const.str "B"
    invoke.static M2.put/1
    return
  end
  method static put/1
    load 0
    invoke.static DB.executeUpdate/1
    return
  end
end
)gasm");
    auto gs = gadgets_for(p);
    REQUIRE(gs.size() == 2);
    CHECK(count_calls(gs[0], "DB.executeUpdate/1") == 1);
    CHECK(count_calls(gs[1], "DB.executeUpdate/1") == 2);
    CHECK(tg_block(gs[1]) == R"gasm(class TG
  method static TG/2
    param 0 : Request
    param 1 : Response
    load 0
    const.str "a"
    invoke.virtual Request.getParameter/2
    store 2
    load 2
    store 3
    load 3
    invoke.static DB.executeUpdate/1
    const.str "B"
    store 4
    load 4
    invoke.static DB.executeUpdate/1
    return
  end
end
)gasm");
}

TEST_CASE("out-of-scope helper feeding the sink is copied with its body") {
    Program p = parse_program(R"gasm(
class Request extern
  method getParameter/2 extern
end
class Response extern
end
class DB extern
  method static executeUpdate/1 extern
end
class Fmt
  method static wrap/1
    const.str "["
    load 0
    concat
    const.str "]"
    concat
    return.val
  end
end
class OOS
  method static doGet/2
    param 0 : Request
    param 1 : Response
    load 0
    const.str "k"
    invoke.virtual Request.getParameter/2
    invoke.static Fmt.wrap/1
    invoke.static DB.executeUpdate/1
    return
  end
end
)gasm");
    auto gs = gadgets_for(p);
    REQUIRE(gs.size() == 1);
    CHECK(count_calls(gs[0], "Fmt.wrap/1") == 1);
    const ClassDef* fmt = gs[0].program.find_class("Fmt");
    REQUIRE(fmt != nullptr);
    CHECK(!fmt->is_extern);
    const MethodDef* wrap = fmt->find_method("wrap", 1);
    REQUIRE(wrap != nullptr);
    CHECK(wrap->body.size() == 6);
}

TEST_CASE("sanitized flow keeps the sanitizer call") {
    auto gs = gadgets_for_file("ex7");
    REQUIRE(gs.size() == 1);
    CHECK(count_calls(gs[0], "Esc.sqlEscape/1") == 1);
    CHECK(gs[0].program.find_class("Esc") != nullptr);
}

TEST_CASE("every corpus gadget verifies, reparses and rebuilds identically") {
    const char* stems[] = {"ex1",  "ex2",  "ex3",  "ex4",  "ex5",  "ex6",
                           "ex6b", "ex7",  "ex9",  "ex10", "exm1", "exns",
                           "exb2", "exs1", "exs2", "exs3", "exs4", "exs5"};
    TaintConfig cfg = corpus_config();
    for (const char* stem : stems) {
        CAPTURE(stem);
        auto gs = gadgets_for_file(stem);
        REQUIRE(!gs.empty());
        for (const Gadget& g : gs) {
            VerifyReport rep = verify_program(g.program, cfg);
            CAPTURE(g.gasm_text);
            CHECK(rep.ok());
            CHECK(rep.unsupported.empty());
            Program again = parse_program(g.gasm_text);
            CHECK(again == g.program);
            CHECK(parse_program(render_gasm(g.program)) == g.program);
        }
    }
}

TEST_CASE("assembly is deterministic") {
    for (int round = 0; round < 2; ++round) {
        auto a = gadgets_for_file("ex3");
        auto b = gadgets_for_file("ex3");
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i)
            CHECK(a[i].gasm_text == b[i].gasm_text);
    }
}

namespace {

std::string gadget_pseudo(const Gadget& g) {
    TaintConfig cfg = corpus_config();
    const ClassDef* tg = g.program.find_class("TG");
    REQUIRE(tg != nullptr);
    REQUIRE(tg->methods.size() == 1);
    const auto& sig = tg->methods.begin()->first;
    return pseudo_text(build_pseudo(g.program, cfg, {"TG", sig.first, sig.second}, "TG"));
}

std::string endpoint_pseudo(const Program& p) {
    TaintConfig cfg = corpus_config();
    auto eps = identify_endpoints(p, cfg);
    REQUIRE(eps.size() == 1);
    return pseudo_text(build_pseudo(p, cfg, eps[0], eps[0].name));
}

} // namespace

TEST_CASE("pseudo: one-sided guard renders as a null check") {
    auto gs = gadgets_for_file("ex5");
    REQUIRE(gs.size() == 1);
    CHECK(gadget_pseudo(gs[0]) == R"ps(void TG(Request var0, Response var1) {
  var2 = var0.getParameter("BT"); // Source
  if (var2 == null) {
    var2 = "";
  }
  var3 = (("INSERT INTO messages VALUES ('" + var2) + "')");
  DB.executeUpdate(var3); // Sink
}
)ps");
}

TEST_CASE("pseudo: restored loop renders as a while, skipped loop vanishes") {
    auto gs = gadgets_for_file("ex3");
    REQUIRE(gs.size() == 2);
    CHECK(gadget_pseudo(gs[0]) == R"ps(void TG(Request var0, Response var1) {
  var2 = "";
  DB.executeUpdate(var2); // Sink
}
)ps");
    CHECK(gadget_pseudo(gs[1]) == R"ps(void TG(Request var0, Response var1) {
  var2 = var0.getParameter("n"); // Source
  var3 = "";
  var4 = 0;
  while (var4 != 2) {
    var3 = (var3 + var2);
    var4 = (var4 + 1);
  }
  DB.executeUpdate(var3); // Sink
}
)ps");
}

TEST_CASE("pseudo: guard arms, negated and positive") {
    auto gs = gadgets_for_file("ex1");
    REQUIRE(gs.size() == 2);
    CHECK(gadget_pseudo(gs[0]) == R"ps(void TG(Request var0, Response var1) {
  if (var0.getParameter("A") != null) { // Source
    var2 = var0.getParameter("A"); // Source
  }
  DB.executeUpdate(var2); // Sink
}
)ps");
    CHECK(gadget_pseudo(gs[1]) == R"ps(void TG(Request var0, Response var1) {
  if (var0.getParameter("A") == null) { // Source
    var2 = "DEFAULT";
  }
  DB.executeUpdate(var2); // Sink
}
)ps");

    auto g10 = gadgets_for_file("ex10");
    REQUIRE(g10.size() == 1);
    CHECK(gadget_pseudo(g10[0]) == R"ps(void TG(Request var0, Response var1) {
  var2 = var0.getParameter("x"); // Source
  if (var2 != null) {
    DB.executeUpdate(var2); // Sink
  }
}
)ps");
}

TEST_CASE("pseudo: static store and folded concat chain") {
    auto gs = gadgets_for_file("ex9");
    REQUIRE(gs.size() == 1);
    CHECK(gadget_pseudo(gs[0]) == R"ps(void TG(Request var0, Response var1) {
  var2 = var0.getParameter("v"); // Source
  Ex9Cfg.table = "users";
  var3 = (((("INSERT INTO " + Ex9Cfg.table) + " VALUES ('") + var2) + "')");
  DB.executeUpdate(var3); // Sink
}
)ps");

    auto g2 = gadgets_for_file("ex2");
    REQUIRE(g2.size() == 1);
    CHECK(gadget_pseudo(g2[0]) == R"ps(void TG(Request var0) {
  var1 = var0.getParameter("q"); // Source
  DB.executeUpdate((("INSERT INTO t VALUES ('" + var1) + "')")); // Sink
}
)ps");
}

TEST_CASE("pseudo: original endpoint with both arms and a top-tested loop") {
    CHECK(endpoint_pseudo(parse_program_file(corpus_path("ex1"))) ==
          R"ps(void doGet(Request var0, Response var1) {
  if (var0.getParameter("A") != null) { // Source
    var2 = var0.getParameter("A"); // Source
  } else {
    var2 = "DEFAULT";
  }
  Log.debug("Database update");
  DB.executeUpdate(var2); // Sink
}
)ps");
    CHECK(endpoint_pseudo(parse_program_file(corpus_path("ex3"))) ==
          R"ps(void doGet(Request var0, Response var1) {
  var2 = var0.getParameter("n"); // Source
  var3 = "";
  var4 = 0;
  while (var4 != 2) {
    var3 = (var3 + var2);
    var4 = (var4 + 1);
  }
  DB.executeUpdate(var3); // Sink
}
)ps");
}

TEST_CASE("pseudo lexer: tokens, comments and literals") {
    auto t = lex_pseudo("var2 = var0.getParameter(\"BT\");");
    CHECK(t == std::vector<std::string>{"var2", "=", "var0", ".", "getParameter", "(", "\"BT\"",
                                        ")", ";"});
    CHECK(lex_pseudo("x = 1; // Sink\n").size() == 4);
    CHECK(lex_pseudo("a != b >= c == d").size() == 7);
    CHECK(lex_pseudo("s = \"a // not a comment\";").size() == 4);
    CHECK_THROWS(lex_pseudo("x = \"unterminated"));
    CHECK_THROWS(lex_pseudo("x = @;"));
}

TEST_CASE("pseudo grammar: accepts renderings, rejects malformed text") {
    CHECK_NOTHROW(check_pseudo("void f() {\n}\n"));
    CHECK_NOTHROW(check_pseudo("void f(Request var0) {\n  if (var0 == null) {\n  } else {\n"
                               "    f.g(1, \"x\", new C());\n  }\n  return;\n}\n"));
    CHECK_THROWS(check_pseudo(""));
    CHECK_THROWS(check_pseudo("void f( {"));
    CHECK_THROWS(check_pseudo("void f() { x = ; }"));
    CHECK_THROWS(check_pseudo("void f() { if x { } }"));
    CHECK_THROWS(check_pseudo("void f() { while (1) do; }"));
    CHECK_THROWS(check_pseudo("void f() { return 1 }"));
}

TEST_CASE("pseudo: every corpus rendering parses and is deterministic") {
    const char* stems[] = {"ex1",  "ex2",  "ex3",  "ex4",  "ex5",  "ex6",
                           "ex6b", "ex7",  "ex9",  "ex10", "exm1", "exns",
                           "exb2", "exs1", "exs2", "exs3", "exs4", "exs5"};
    for (const char* stem : stems) {
        CAPTURE(stem);
        Program p = parse_program_file(corpus_path(stem));
        std::string fn = endpoint_pseudo(p);
        CAPTURE(fn);
        CHECK_NOTHROW(check_pseudo(fn));
        CHECK(lex_pseudo(fn).size() > 8);
        for (const Gadget& g : gadgets_for(p)) {
            std::string txt = gadget_pseudo(g);
            CAPTURE(txt);
            CHECK_NOTHROW(check_pseudo(txt));
            CHECK(gadget_pseudo(g) == txt);
        }
    }
}
