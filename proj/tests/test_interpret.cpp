#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tprn/interpret.hpp"
#include "tprn/rng.hpp"

using namespace tprn;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path(name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// small trained-shape setup: grammar, corpus, randomly initialized model
struct Fixture {
    SyntheticGrammar grammar;
    std::vector<Example> corpus;
    ModelParams model;

    Fixture()
        : grammar(genGrammar(3, 4, 3, 5, GrammarOptions{.dWord = 8})),
          corpus(genCorpus(grammar, 12, 4)) {
        Hyper h;
        h.nSymbols = 6;
        h.nRoles = 4;
        h.dSymbols = 4;
        h.dRoles = 4;
        h.dWord = 8;
        model = ModelParams::init(h, TaskKind::TokenClassification, 12, 5);
    }
};

TraceRecord makeRecord(const std::string& token, Vector aS, Vector aR,
                       Direction dir = Direction::Forward, int ex = 0, int pos = 0) {
    TraceRecord r;
    r.tokenText = token;
    r.exampleId = ex;
    r.position = pos;
    r.direction = dir;
    r.symbolAttention = std::move(aS);
    r.roleAttention = std::move(aR);
    r.roleAttentionNormalized = l2Normalize(r.roleAttention);
    r.symbolVec = r.symbolAttention;  // identity embedding stand-in
    return r;
}

}  // namespace

TEST_CASE("dumpTraces: one record per occurrence per direction") {
    Fixture f;
    std::vector<Example> one{f.corpus[0]};
    const TraceDump dump = dumpTraces(f.model, one, f.grammar.embeddings);
    const std::size_t n = one[0].tokens.size();
    REQUIRE(dump.records.size() == 2 * n);
    std::size_t fwd = 0, bwd = 0;
    for (const auto& r : dump.records) {
        if (r.direction == Direction::Forward) ++fwd;
        if (r.direction == Direction::Backward) ++bwd;
        CHECK(norm2(r.roleAttentionNormalized) == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(r.symbolVec.size() == 4);
        CHECK(r.goldRole >= 0);
        CHECK(r.goldClass >= 0);
        CHECK(r.tokenText ==
              f.grammar.embeddings.tokens[static_cast<std::size_t>(
                  one[static_cast<std::size_t>(r.exampleId)].tokens[static_cast<std::size_t>(r.position)])]);
    }
    CHECK(fwd == n);
    CHECK(bwd == n);

    CHECK_THROWS_AS(dumpTraces(f.model, {}, f.grammar.embeddings), DegenerateInputError);
}

TEST_CASE("trace dump file round-trips and regenerates identically") {
    Fixture f;
    const TraceDump dump = dumpTraces(f.model, f.corpus, f.grammar.embeddings);

    TempFile a("dump_a_tmp.jsonl");
    TempFile b("dump_b_tmp.jsonl");
    writeTraceDump(dump, a.path);
    // regeneration from the same params is byte-identical
    const TraceDump again = dumpTraces(f.model, f.corpus, f.grammar.embeddings);
    writeTraceDump(again, b.path);
    CHECK(slurp(a.path) == slurp(b.path));

    TraceDump back = readTraceDump(a.path, &f.model.fwd.symbolEmbeddings);
    REQUIRE(back.records.size() == dump.records.size());
    for (std::size_t i = 0; i < dump.records.size(); ++i) {
        const auto& x = dump.records[i];
        const auto& y = back.records[i];
        CHECK(x.tokenText == y.tokenText);
        CHECK(x.exampleId == y.exampleId);
        CHECK(x.position == y.position);
        CHECK((x.direction == y.direction));
        CHECK(x.symbolAttention == y.symbolAttention);  // 17 digits round-trip exactly
        CHECK(x.roleAttention == y.roleAttention);
    }
    // derived symbol vectors recomputed only for forward-cell records
    attachGold(back, f.corpus);
    for (std::size_t i = 0; i < back.records.size(); ++i) {
        CHECK(back.records[i].goldRole == dump.records[i].goldRole);
        CHECK(back.records[i].goldClass == dump.records[i].goldClass);
    }
}

TEST_CASE("assignRoles: 1-hot attention lands exactly in its argmax role") {
    TraceDump dump;
    dump.records.push_back(makeRecord("a", {1, 0, 0}, {0.0, 1.0, 0.0}));
    dump.records.push_back(makeRecord("b", {0, 1, 0}, {0.0, 0.0, 1.0}));
    RoleThresholds th;
    const auto roles = assignRoles(dump, th);
    REQUIRE(roles.size() == 3);
    CHECK(roles[0].members.empty());
    CHECK(roles[1].members == std::vector<int>{0});
    CHECK(roles[2].members == std::vector<int>{1});
}

TEST_CASE("assignRoles: per-role threshold overrides and multi-membership") {
    TraceDump dump;
    // normalized vector (0.6, 0.8): above 0.5 in both slots
    dump.records.push_back(makeRecord("w", {1, 0}, {0.6, 0.8}));
    RoleThresholds th;
    auto roles = assignRoles(dump, th);
    CHECK(roles[0].members.size() == 1);
    CHECK(roles[1].members.size() == 1);

    th.perRole[0] = 0.65;  // published role-9-style override
    roles = assignRoles(dump, th);
    CHECK(roles[0].threshold == 0.65);
    CHECK(roles[0].members.empty());
    CHECK(roles[1].members.size() == 1);

    RoleThresholds bad;
    bad.defaultValue = 1.0;
    CHECK_THROWS_AS(assignRoles(dump, bad), ConfigError);
}

TEST_CASE("assignRoles: 0.25 midpoint split separates two populations") {
    // singular/plural-style data: one role component is either low or high
    TraceDump dump;
    Rng rng(6);
    int high = 0;
    for (int i = 0; i < 40; ++i) {
        const bool plural = i % 2 == 0;
        // component 1 carries the split; normalize against a dominant component 0
        const double level = plural ? rng.uniform(0.3, 0.45) : rng.uniform(0.05, 0.2);
        Vector aR{1.0, 0.0, 0.0};
        aR[1] = level / std::sqrt(1.0 - level * level);  // normalized value == level
        dump.records.push_back(makeRecord(plural ? "areas" : "area", {1, 0}, aR, Direction::Forward,
                                          i, 0));
        if (plural) ++high;
    }
    RoleThresholds th;
    th.perRole[1] = 0.25;
    const auto roles = assignRoles(dump, th);
    REQUIRE(roles.size() == 3);
    CHECK(static_cast<int>(roles[1].members.size()) == high);
    for (int idx : roles[1].members)
        CHECK(dump.records[static_cast<std::size_t>(idx)].tokenText == "areas");
}

TEST_CASE("assignRoles: membership invariant under positive rescaling of raw attention") {
    Rng rng(7);
    TraceDump dump, scaled;
    for (int i = 0; i < 30; ++i) {
        Vector aR(5);
        for (auto& x : aR) x = rng.uniform01();
        Vector aRs = aR;
        const double c = rng.uniform(0.01, 50.0);
        for (auto& x : aRs) x *= c;
        dump.records.push_back(makeRecord("w", {1, 0}, aR));
        scaled.records.push_back(makeRecord("w", {1, 0}, aRs));
    }
    RoleThresholds th;
    const auto a = assignRoles(dump, th);
    const auto b = assignRoles(scaled, th);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].members == b[k].members);
}

TEST_CASE("assignSymbols: orthonormal embeddings recover 1-hot attention exactly") {
    TraceDump dump;
    dump.records.push_back(makeRecord("x", {0, 0, 1, 0}, {1, 0}));
    dump.records.push_back(makeRecord("y", {0, 1, 0, 0}, {1, 0}));
    const Matrix s = Matrix::identity(4);  // symbolVec == aS by the fixture
    const SymbolAssignment a = assignSymbols(dump, s);
    CHECK(a.assignedSymbol[0] == 2);
    CHECK(a.assignedSymbol[1] == 1);
    CHECK(a.similarity[0] == doctest::Approx(1.0).epsilon(1e-12));
    // each occurrence got exactly one symbol: a partition
    CHECK(a.topTokens[2].size() == 1);
    CHECK(a.topTokens[1].size() == 1);
}

TEST_CASE("assignSymbols: matches a brute-force all-pairs cosine oracle") {
    Rng rng(8);
    Matrix s(5, 7);
    for (auto& x : s.data()) x = rng.uniform(-1.0, 1.0);
    TraceDump dump;
    for (int i = 0; i < 25; ++i) {
        Vector aS(7), sv(5);
        for (auto& x : aS) x = rng.uniform01();
        for (auto& x : sv) x = rng.uniform(-1.0, 1.0);
        TraceRecord r = makeRecord("w" + std::to_string(i % 9), aS, {1.0, 0.5});
        r.symbolVec = sv;
        dump.records.push_back(std::move(r));
    }
    const SymbolAssignment got = assignSymbols(dump, s, 30);
    for (std::size_t i = 0; i < dump.records.size(); ++i) {
        int best = -1;
        double bestSim = -2.0;
        for (std::size_t j = 0; j < 7; ++j) {
            // plain-loop cosine
            double num = 0.0, nu = 0.0, nv = 0.0;
            for (std::size_t d = 0; d < 5; ++d) {
                num += dump.records[i].symbolVec[d] * s(d, j);
                nu += dump.records[i].symbolVec[d] * dump.records[i].symbolVec[d];
                nv += s(d, j) * s(d, j);
            }
            const double sim = num / std::sqrt(nu * nv);
            if (sim > bestSim) {
                bestSim = sim;
                best = static_cast<int>(j);
            }
        }
        CHECK(got.assignedSymbol[i] == best);
        CHECK(got.similarity[i] == doctest::Approx(bestSim).epsilon(1e-10));
    }
}

TEST_CASE("assignSymbols: scale invariance, dedup, truncation, errors") {
    Rng rng(9);
    Matrix s(4, 5);
    for (auto& x : s.data()) x = rng.uniform(-1.0, 1.0);

    TraceDump dump, scaled;
    for (int i = 0; i < 40; ++i) {
        Vector sv(4);
        for (auto& x : sv) x = rng.uniform(-1.0, 1.0);
        TraceRecord r = makeRecord("tok" + std::to_string(i % 6), {1.0, 0.0}, {1.0, 0.2});
        r.symbolVec = sv;
        dump.records.push_back(r);
        // power-of-two scales keep the rescaling exact in floating point
        const double c = std::ldexp(1.0, static_cast<int>(rng.index(13)) - 6);
        for (auto& x : r.symbolVec) x *= c;
        scaled.records.push_back(std::move(r));
    }
    const SymbolAssignment a = assignSymbols(dump, s, 3);
    const SymbolAssignment b = assignSymbols(scaled, s, 3);
    CHECK(a.assignedSymbol == b.assignedSymbol);

    for (const auto& top : a.topTokens) {
        CHECK(top.size() <= 3);  // truncated to top-k
        for (std::size_t i = 0; i < top.size(); ++i) {
            for (std::size_t j = i + 1; j < top.size(); ++j)
                CHECK(top[i].token != top[j].token);  // type-deduplicated
            if (i + 1 < top.size()) CHECK(top[i].similarity >= top[i + 1].similarity);
        }
    }

    Matrix zeroCol = s;
    for (std::size_t i = 0; i < 4; ++i) zeroCol(i, 2) = 0.0;
    try {
        assignSymbols(dump, zeroCol);
        FAIL("expected DegenerateInputError");
    } catch (const DegenerateInputError& e) {
        CHECK(std::string(e.what()).find("2") != std::string::npos);
    }

    CHECK_THROWS_AS(assignSymbols(dump, s, 0), ConfigError);
}

TEST_CASE("assignSymbols: literal raw-attention reading") {
    TraceDump dump;
    dump.records.push_back(makeRecord("x", {0.1, 0.9, 0.3}, {1, 0}));
    const Matrix s(5, 3);  // embeddings unused in this mode
    const SymbolAssignment a = assignSymbols(dump, s, 5, SymbolSimilarityMode::RawAttention);
    CHECK(a.assignedSymbol[0] == 1);
    const double n = std::sqrt(0.1 * 0.1 + 0.9 * 0.9 + 0.3 * 0.3);
    CHECK(a.similarity[0] == doctest::Approx(0.9 / n).epsilon(1e-12));
}

TEST_CASE("purity: aligned, split and hand-counted tables") {
    // perfectly aligned
    std::vector<std::pair<int, std::string>> aligned;
    for (int i = 0; i < 10; ++i) aligned.emplace_back(i % 3, std::to_string(i % 3));
    const PurityReport a = purity(aligned);
    for (int c = 0; c < 3; ++c) {
        CHECK(a.majorityShare(c) == 1.0);
        CHECK(a.pLabelGivenCluster.at(c).at(std::to_string(c)) == 1.0);
    }

    // even split
    std::vector<std::pair<int, std::string>> split;
    for (int i = 0; i < 8; ++i) split.emplace_back(0, i % 2 ? "x" : "y");
    const PurityReport b = purity(split);
    CHECK(b.pLabelGivenCluster.at(0).at("x") == 0.5);
    CHECK(b.pLabelGivenCluster.at(0).at("y") == 0.5);

    // hand-built contingency: cluster0 {A:3,B:1}, cluster1 {B:2}
    std::vector<std::pair<int, std::string>> hand = {
        {0, "A"}, {0, "A"}, {0, "A"}, {0, "B"}, {1, "B"}, {1, "B"}};
    const PurityReport c = purity(hand);
    CHECK(c.pLabelGivenCluster.at(0).at("A") == doctest::Approx(0.75));
    CHECK(c.pLabelGivenCluster.at(0).at("B") == doctest::Approx(0.25));
    CHECK(c.pClusterGivenLabel.at("B").at(0) == doctest::Approx(1.0 / 3.0));
    CHECK(c.pClusterGivenLabel.at("B").at(1) == doctest::Approx(2.0 / 3.0));
    CHECK(c.majorityLabel(0) == "A");
    CHECK(c.totalCount == 6);

    // every conditional distribution sums to 1
    for (const auto& [cluster, row] : c.pLabelGivenCluster) {
        (void)cluster;
        double sum = 0.0;
        for (const auto& [label, p] : row) {
            (void)label;
            sum += p;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
    for (const auto& [label, row] : c.pClusterGivenLabel) {
        (void)label;
        double sum = 0.0;
        for (const auto& [cluster, p] : row) {
            (void)cluster;
            sum += p;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("polysemyTable: counting and conservation") {
    TraceDump dump;
    dump.records.push_back(makeRecord("who", {1, 0, 0}, {1, 0}, Direction::Forward, 0, 0));
    dump.records.push_back(makeRecord("who", {0, 1, 0}, {1, 0}, Direction::Forward, 1, 2));
    dump.records.push_back(makeRecord("who", {0, 1, 0}, {1, 0}, Direction::Forward, 2, 2));
    dump.records.push_back(makeRecord("other", {0, 0, 1}, {1, 0}, Direction::Forward, 3, 0));
    dump.records[0].goldClass = 0;
    dump.records[1].goldClass = 1;
    dump.records[2].goldClass = 1;
    dump.records[3].goldClass = 0;

    const SymbolAssignment symbols = assignSymbols(dump, Matrix::identity(3));
    const auto byClass = [](const TraceRecord& r) { return std::to_string(r.goldClass); };

    const PolysemyTable t = polysemyTable("who", dump, symbols, byClass);
    CHECK(t.total == 3);
    int sum = 0;
    for (const auto& row : t.counts)
        for (int x : row) sum += x;
    CHECK(sum == t.total);
    REQUIRE(t.contextLabels.size() == 2);
    CHECK(t.majoritySymbol(0) != t.majoritySymbol(1));

    // single-occurrence word: exactly one nonzero cell
    const PolysemyTable o = polysemyTable("other", dump, symbols, byClass);
    CHECK(o.total == 1);
    CHECK(o.counts.size() == 1);
    CHECK(o.counts[0].size() == 1);
    CHECK(o.counts[0][0] == 1);

    CHECK_THROWS_AS(polysemyTable("absent", dump, symbols, byClass), DegenerateInputError);
}

TEST_CASE("report round-trip: json and csv, empty and populated") {
    InterpretationReport empty;
    TempFile je("report_empty_tmp.json");
    TempFile ce("report_empty_tmp.csv");
    writeReport(empty, je.path, ReportFormat::Json);
    writeReport(empty, ce.path, ReportFormat::Csv);
    CHECK(readReport(je.path, ReportFormat::Json) == empty);
    CHECK(readReport(ce.path, ReportFormat::Csv) == empty);
    CHECK(slurp(ce.path).rfind("section,", 0) == 0);  // header present

    InterpretationReport rep;
    rep.attention = {0.875, 0.0625, 0.75, 1.0 / 3.0};
    rep.roles.push_back({0, 0.5, {0, 2, 5}});
    rep.roles.push_back({1, 0.65, {}});
    rep.rolePurity = purity({{0, "r0"}, {0, "r0"}, {0, "r1"}, {1, "r1"}});
    rep.symbols.push_back({3, 7, {{"alpha", 0.9375, 2}, {"beta", 0.5, 0}}});
    rep.symbolPurity = purity({{3, "c0"}, {3, "c0"}});
    PolysemyTable pt;
    pt.word = "poly";
    pt.contextLabels = {"0", "5"};
    pt.symbolIds = {1, 4};
    pt.counts = {{3, 0}, {1, 9}};
    pt.total = 13;
    rep.polysemy.push_back(pt);

    TempFile jf("report_full_tmp.json");
    TempFile cf("report_full_tmp.csv");
    writeReport(rep, jf.path, ReportFormat::Json);
    writeReport(rep, cf.path, ReportFormat::Csv);
    CHECK(readReport(jf.path, ReportFormat::Json) == rep);
    CHECK(readReport(cf.path, ReportFormat::Csv) == rep);

    // deterministic serialization
    TempFile jf2("report_full2_tmp.json");
    writeReport(rep, jf2.path, ReportFormat::Json);
    CHECK(slurp(jf.path) == slurp(jf2.path));
}
