#include "tprn/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tprn/cell.hpp"
#include "tprn/objective.hpp"

namespace tprn {

using nlohmann::json;

namespace {

std::string fmt17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string jsonEscape(const std::string& s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    return out;
}

void appendArray(std::string& out, const Vector& v) {
    out += '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += fmt17(v[i]);
    }
    out += ']';
}

bool considered(const TraceRecord& r, DirectionFilter dir) {
    switch (dir) {
        case DirectionFilter::Forward: return r.direction == Direction::Forward;
        case DirectionFilter::Backward: return r.direction == Direction::Backward;
        case DirectionFilter::Both: return true;
    }
    return false;
}

}  // namespace

TraceDump dumpTraces(const ModelParams& params, const std::vector<Example>& corpus,
                     const EmbeddingTable& embeddings) {
    if (corpus.empty())
        throw DegenerateInputError("dumpTraces: empty corpus");
    params.validate();

    TraceDump dump;
    for (std::size_t ex = 0; ex < corpus.size(); ++ex) {
        const Example& e = corpus[ex];
        std::vector<Vector> words;
        words.reserve(e.tokens.size());
        for (int row : e.tokens) words.push_back(embeddings.row(row));

        auto emit = [&](const std::vector<StepTrace>& traces, Direction dir,
                        const CellParams& cell) {
            for (std::size_t i = 0; i < traces.size(); ++i) {
                TraceRecord r;
                r.tokenText = embeddings.tokens[static_cast<std::size_t>(e.tokens[i])];
                r.exampleId = static_cast<int>(ex);
                r.position = static_cast<int>(i);
                r.direction = dir;
                r.symbolAttention = traces[i].symbolAttention;
                r.roleAttention = traces[i].roleAttention;
                r.symbolVec = matvec(cell.symbolEmbeddings, r.symbolAttention);
                r.roleAttentionNormalized = l2Normalize(r.roleAttention);
                r.goldRole = e.goldRoles[i];
                r.goldClass = e.goldClasses[i];
                dump.records.push_back(std::move(r));
            }
        };
        emit(runSequence(params.hyper, params.fwd, words, Direction::Forward),
             Direction::Forward, params.fwd);
        emit(runSequence(params.hyper, params.bwd, words, Direction::Backward),
             Direction::Backward, params.bwd);
    }
    return dump;
}

void writeTraceDump(const TraceDump& dump, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("writeTraceDump: cannot write " + path);
    std::string line;
    for (const auto& r : dump.records) {
        line.clear();
        line += "{\"tokenText\":\"";
        line += jsonEscape(r.tokenText);
        line += "\",\"exampleId\":";
        line += std::to_string(r.exampleId);
        line += ",\"position\":";
        line += std::to_string(r.position);
        line += ",\"direction\":\"";
        line += r.direction == Direction::Forward ? "fwd" : "bwd";
        line += "\",\"aS\":";
        appendArray(line, r.symbolAttention);
        line += ",\"aR\":";
        appendArray(line, r.roleAttention);
        line += "}\n";
        out << line;
    }
    if (!out)
        throw IoError("writeTraceDump: write failed for " + path);
}

TraceDump readTraceDump(const std::string& path, const Matrix* symbolEmbeddings) {
    std::ifstream in(path);
    if (!in)
        throw IoError("readTraceDump: cannot open " + path);
    TraceDump dump;
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError("readTraceDump: line " + std::to_string(lineNo) + ": " + e.what());
        }
        TraceRecord r;
        r.tokenText = j.at("tokenText").get<std::string>();
        r.exampleId = j.at("exampleId").get<int>();
        r.position = j.at("position").get<int>();
        r.direction =
            j.at("direction").get<std::string>() == "fwd" ? Direction::Forward : Direction::Backward;
        r.symbolAttention = j.at("aS").get<Vector>();
        r.roleAttention = j.at("aR").get<Vector>();
        r.roleAttentionNormalized = l2Normalize(r.roleAttention);
        if (symbolEmbeddings) r.symbolVec = matvec(*symbolEmbeddings, r.symbolAttention);
        dump.records.push_back(std::move(r));
    }
    return dump;
}

void attachGold(TraceDump& dump, const std::vector<Example>& corpus) {
    for (auto& r : dump.records) {
        if (r.exampleId < 0 || r.exampleId >= static_cast<int>(corpus.size()))
            throw InputError("attachGold: exampleId out of range");
        const auto& e = corpus[static_cast<std::size_t>(r.exampleId)];
        if (r.position < 0 || r.position >= static_cast<int>(e.goldRoles.size()))
            throw InputError("attachGold: position out of range");
        r.goldRole = e.goldRoles[static_cast<std::size_t>(r.position)];
        r.goldClass = e.goldClasses[static_cast<std::size_t>(r.position)];
    }
}

void RoleThresholds::validate() const {
    auto check = [](double t) {
        if (t <= 0.0 || t >= 1.0)
            throw ConfigError("RoleThresholds: threshold must lie in (0,1)");
    };
    check(defaultValue);
    for (const auto& [k, t] : perRole) {
        (void)k;
        check(t);
    }
}

std::vector<RoleAssignment> assignRoles(const TraceDump& dump, const RoleThresholds& thresholds,
                                        DirectionFilter dir) {
    thresholds.validate();
    std::size_t nRoles = 0;
    for (const auto& r : dump.records) nRoles = std::max(nRoles, r.roleAttention.size());

    std::vector<RoleAssignment> out(nRoles);
    for (std::size_t k = 0; k < nRoles; ++k) {
        out[k].roleId = static_cast<int>(k);
        out[k].threshold = thresholds.of(static_cast<int>(k));
    }
    for (std::size_t i = 0; i < dump.records.size(); ++i) {
        const auto& r = dump.records[i];
        if (!considered(r, dir)) continue;
        for (std::size_t k = 0; k < r.roleAttentionNormalized.size(); ++k) {
            if (r.roleAttentionNormalized[k] > out[k].threshold)
                out[k].members.push_back(static_cast<int>(i));
        }
    }
    return out;
}

SymbolAssignment assignSymbols(const TraceDump& dump, const Matrix& symbolEmbeddings, int topK,
                               SymbolSimilarityMode mode, DirectionFilter dir) {
    if (topK < 1)
        throw ConfigError("assignSymbols: topK must be >= 1");
    const std::size_t nSymbols = mode == SymbolSimilarityMode::EmbeddedVector
                                     ? symbolEmbeddings.cols()
                                     : (dump.records.empty()
                                            ? symbolEmbeddings.cols()
                                            : dump.records.front().symbolAttention.size());
    std::vector<Vector> columns;
    if (mode == SymbolSimilarityMode::EmbeddedVector) {
        columns.reserve(nSymbols);
        for (std::size_t j = 0; j < nSymbols; ++j) {
            Vector c = symbolEmbeddings.column(j);
            if (norm2(c) == 0.0)
                throw DegenerateInputError("assignSymbols: symbol column " + std::to_string(j) +
                                           " has zero norm");
            columns.push_back(std::move(c));
        }
    }

    SymbolAssignment out;
    out.assignedSymbol.assign(dump.records.size(), -1);
    out.similarity.assign(dump.records.size(), 0.0);
    out.topTokens.resize(nSymbols);

    std::vector<std::vector<SymbolEntry>> raw(nSymbols);
    for (std::size_t i = 0; i < dump.records.size(); ++i) {
        const auto& r = dump.records[i];
        if (!considered(r, dir)) continue;
        int best = -1;
        double bestSim = 0.0;
        if (mode == SymbolSimilarityMode::EmbeddedVector) {
            for (std::size_t j = 0; j < nSymbols; ++j) {
                const double sim = cosine(r.symbolVec, columns[j]);
                if (best < 0 || sim > bestSim) {
                    best = static_cast<int>(j);
                    bestSim = sim;
                }
            }
        } else {
            // cosine(a_S, onehot_j) = a_S[j] / ||a_S||
            const double n = norm2(r.symbolAttention);
            if (n == 0.0)
                throw DegenerateInputError("assignSymbols: zero symbol attention");
            for (std::size_t j = 0; j < r.symbolAttention.size(); ++j) {
                const double sim = r.symbolAttention[j] / n;
                if (best < 0 || sim > bestSim) {
                    best = static_cast<int>(j);
                    bestSim = sim;
                }
            }
        }
        out.assignedSymbol[i] = best;
        out.similarity[i] = bestSim;
        raw[static_cast<std::size_t>(best)].push_back(
            {dump.records[i].tokenText, bestSim, static_cast<int>(i)});
    }

    for (std::size_t j = 0; j < nSymbols; ++j) {
        auto& entries = raw[j];
        std::sort(entries.begin(), entries.end(), [](const SymbolEntry& a, const SymbolEntry& b) {
            if (a.similarity != b.similarity) return a.similarity > b.similarity;
            if (a.token != b.token) return a.token < b.token;
            return a.recordIndex < b.recordIndex;
        });
        std::vector<SymbolEntry> dedup;
        for (auto& e : entries) {
            bool seen = false;
            for (const auto& d : dedup)
                if (d.token == e.token) {
                    seen = true;
                    break;
                }
            if (!seen) dedup.push_back(std::move(e));
            if (static_cast<int>(dedup.size()) >= topK) break;
        }
        out.topTokens[j] = std::move(dedup);
    }
    return out;
}

PurityReport purity(const std::vector<std::pair<int, std::string>>& memberships) {
    PurityReport rep;
    std::map<std::string, int> labelTotals;
    std::map<int, int> clusterTotals;
    for (const auto& [cluster, label] : memberships) {
        rep.counts[cluster][label] += 1;
        labelTotals[label] += 1;
        clusterTotals[cluster] += 1;
        rep.totalCount += 1;
    }
    for (const auto& [cluster, row] : rep.counts) {
        const double denom = clusterTotals[cluster];
        for (const auto& [label, n] : row)
            rep.pLabelGivenCluster[cluster][label] = static_cast<double>(n) / denom;
    }
    for (const auto& [cluster, row] : rep.counts) {
        for (const auto& [label, n] : row)
            rep.pClusterGivenLabel[label][cluster] =
                static_cast<double>(n) / static_cast<double>(labelTotals[label]);
    }
    return rep;
}

std::string PurityReport::majorityLabel(int cluster) const {
    auto it = counts.find(cluster);
    if (it == counts.end() || it->second.empty()) return {};
    std::string best;
    int bestN = -1;
    for (const auto& [label, n] : it->second) {
        if (n > bestN) {
            best = label;
            bestN = n;
        }
    }
    return best;
}

double PurityReport::majorityShare(int cluster) const {
    auto it = counts.find(cluster);
    if (it == counts.end() || it->second.empty()) return 0.0;
    int total = 0, best = 0;
    for (const auto& [label, n] : it->second) {
        total += n;
        best = std::max(best, n);
    }
    return static_cast<double>(best) / static_cast<double>(total);
}

int PolysemyTable::majoritySymbol(std::size_t contextRow) const {
    if (contextRow >= counts.size()) return -1;
    int best = -1, bestN = -1;
    for (std::size_t c = 0; c < counts[contextRow].size(); ++c) {
        if (counts[contextRow][c] > bestN) {
            bestN = counts[contextRow][c];
            best = symbolIds[c];
        }
    }
    return best;
}

PolysemyTable polysemyTable(const std::string& word, const TraceDump& dump,
                            const SymbolAssignment& symbols, const ContextLabeler& labeler) {
    std::map<std::string, std::map<int, int>> cells;
    int total = 0;
    for (std::size_t i = 0; i < dump.records.size(); ++i) {
        if (dump.records[i].tokenText != word) continue;
        if (symbols.assignedSymbol[i] < 0) continue;
        cells[labeler(dump.records[i])][symbols.assignedSymbol[i]] += 1;
        ++total;
    }
    if (total == 0)
        throw DegenerateInputError("polysemyTable: word '" + word + "' has no assigned occurrences");

    PolysemyTable t;
    t.word = word;
    t.total = total;
    std::map<int, std::size_t> symCol;
    for (const auto& [ctx, row] : cells)
        for (const auto& [sym, n] : row) {
            (void)n;
            if (!symCol.count(sym)) {
                symCol[sym] = t.symbolIds.size();
                t.symbolIds.push_back(sym);
            }
        }
    // symbol ids ascend because the outer map is ordered
    for (const auto& [ctx, row] : cells) {
        t.contextLabels.push_back(ctx);
        std::vector<int> r(t.symbolIds.size(), 0);
        for (const auto& [sym, n] : row) r[symCol[sym]] = n;
        t.counts.push_back(std::move(r));
    }
    return t;
}

bool InterpretationReport::operator==(const InterpretationReport& o) const {
    return attention == o.attention && roles == o.roles && rolePurity == o.rolePurity &&
           symbols == o.symbols && symbolPurity == o.symbolPurity && polysemy == o.polysemy;
}

namespace {

void writePurityJson(std::string& out, const PurityReport& rep) {
    out += "{\"counts\":{";
    bool firstC = true;
    for (const auto& [cluster, row] : rep.counts) {
        if (!firstC) out += ',';
        firstC = false;
        out += '"' + std::to_string(cluster) + "\":{";
        bool first = true;
        for (const auto& [label, n] : row) {
            if (!first) out += ',';
            first = false;
            out += '"' + jsonEscape(label) + "\":" + std::to_string(n);
        }
        out += '}';
    }
    out += "},\"pLabelGivenCluster\":{";
    firstC = true;
    for (const auto& [cluster, row] : rep.pLabelGivenCluster) {
        if (!firstC) out += ',';
        firstC = false;
        out += '"' + std::to_string(cluster) + "\":{";
        bool first = true;
        for (const auto& [label, p] : row) {
            if (!first) out += ',';
            first = false;
            out += '"' + jsonEscape(label) + "\":" + fmt17(p);
        }
        out += '}';
    }
    out += "},\"pClusterGivenLabel\":{";
    firstC = true;
    for (const auto& [label, row] : rep.pClusterGivenLabel) {
        if (!firstC) out += ',';
        firstC = false;
        out += '"' + jsonEscape(label) + "\":{";
        bool first = true;
        for (const auto& [cluster, p] : row) {
            if (!first) out += ',';
            first = false;
            out += '"' + std::to_string(cluster) + "\":" + fmt17(p);
        }
        out += '}';
    }
    out += "},\"totalCount\":" + std::to_string(rep.totalCount) + '}';
}

PurityReport readPurityJson(const json& j) {
    PurityReport rep;
    for (const auto& [cluster, row] : j.at("counts").items())
        for (const auto& [label, n] : row.items())
            rep.counts[std::stoi(cluster)][label] = n.get<int>();
    for (const auto& [cluster, row] : j.at("pLabelGivenCluster").items())
        for (const auto& [label, p] : row.items())
            rep.pLabelGivenCluster[std::stoi(cluster)][label] = p.get<double>();
    for (const auto& [label, row] : j.at("pClusterGivenLabel").items())
        for (const auto& [cluster, p] : row.items())
            rep.pClusterGivenLabel[label][std::stoi(cluster)] = p.get<double>();
    rep.totalCount = j.at("totalCount").get<int>();
    return rep;
}

std::string csvSafe(const std::string& s) {
    if (s.find(',') != std::string::npos || s.find('"') != std::string::npos ||
        s.find('\n') != std::string::npos)
        throw IoError("report CSV: token/label text must not contain commas, quotes or newlines: '" +
                      s + "'");
    return s;
}

void writePurityCsv(std::ofstream& out, const char* prefix, const PurityReport& rep) {
    for (const auto& [cluster, row] : rep.counts)
        for (const auto& [label, n] : row)
            out << prefix << "Count," << cluster << ',' << csvSafe(label) << ',' << n << '\n';
    for (const auto& [cluster, row] : rep.pLabelGivenCluster)
        for (const auto& [label, p] : row)
            out << prefix << "Row," << cluster << ',' << csvSafe(label) << ',' << fmt17(p) << '\n';
    for (const auto& [label, row] : rep.pClusterGivenLabel)
        for (const auto& [cluster, p] : row)
            out << prefix << "Col," << csvSafe(label) << ',' << cluster << ',' << fmt17(p) << '\n';
    out << prefix << "Total," << rep.totalCount << '\n';
}

}  // namespace

void writeReport(const InterpretationReport& report, const std::string& path, ReportFormat fmt) {
    std::ofstream out(path);
    if (!out)
        throw IoError("writeReport: cannot write " + path);

    if (fmt == ReportFormat::Json) {
        std::string s;
        s += "{\"attention\":{\"meanMaxComponent\":" + fmt17(report.attention.meanMaxComponent) +
             ",\"meanMaxRole\":" + fmt17(report.attention.meanMaxRole) +
             ",\"meanMaxSymbol\":" + fmt17(report.attention.meanMaxSymbol) +
             ",\"meanQ\":" + fmt17(report.attention.meanQ) + "},";
        s += "\"roles\":[";
        for (std::size_t i = 0; i < report.roles.size(); ++i) {
            const auto& r = report.roles[i];
            if (i) s += ',';
            s += "{\"roleId\":" + std::to_string(r.roleId) +
                 ",\"threshold\":" + fmt17(r.threshold) + ",\"members\":[";
            for (std::size_t k = 0; k < r.members.size(); ++k) {
                if (k) s += ',';
                s += std::to_string(r.members[k]);
            }
            s += "]}";
        }
        s += "],\"rolePurity\":";
        writePurityJson(s, report.rolePurity);
        s += ",\"symbols\":[";
        for (std::size_t i = 0; i < report.symbols.size(); ++i) {
            const auto& c = report.symbols[i];
            if (i) s += ',';
            s += "{\"symbolId\":" + std::to_string(c.symbolId) +
                 ",\"occurrences\":" + std::to_string(c.occurrences) + ",\"topTokens\":[";
            for (std::size_t k = 0; k < c.topTokens.size(); ++k) {
                if (k) s += ',';
                s += "{\"token\":\"" + jsonEscape(c.topTokens[k].token) +
                     "\",\"similarity\":" + fmt17(c.topTokens[k].similarity) +
                     ",\"recordIndex\":" + std::to_string(c.topTokens[k].recordIndex) + '}';
            }
            s += "]}";
        }
        s += "],\"symbolPurity\":";
        writePurityJson(s, report.symbolPurity);
        s += ",\"polysemy\":[";
        for (std::size_t i = 0; i < report.polysemy.size(); ++i) {
            const auto& t = report.polysemy[i];
            if (i) s += ',';
            s += "{\"word\":\"" + jsonEscape(t.word) + "\",\"contextLabels\":[";
            for (std::size_t k = 0; k < t.contextLabels.size(); ++k) {
                if (k) s += ',';
                s += '"' + jsonEscape(t.contextLabels[k]) + '"';
            }
            s += "],\"symbolIds\":[";
            for (std::size_t k = 0; k < t.symbolIds.size(); ++k) {
                if (k) s += ',';
                s += std::to_string(t.symbolIds[k]);
            }
            s += "],\"counts\":[";
            for (std::size_t rI = 0; rI < t.counts.size(); ++rI) {
                if (rI) s += ',';
                s += '[';
                for (std::size_t c = 0; c < t.counts[rI].size(); ++c) {
                    if (c) s += ',';
                    s += std::to_string(t.counts[rI][c]);
                }
                s += ']';
            }
            s += "],\"total\":" + std::to_string(t.total) + '}';
        }
        s += "]}";
        out << s << '\n';
    } else {
        out << "section,f1,f2,f3,f4,f5\n";
        out << "attention," << fmt17(report.attention.meanMaxComponent) << ','
            << fmt17(report.attention.meanQ) << ',' << fmt17(report.attention.meanMaxSymbol) << ','
            << fmt17(report.attention.meanMaxRole) << '\n';
        for (const auto& r : report.roles) {
            out << "role," << r.roleId << ',' << fmt17(r.threshold) << ',' << r.members.size() << ',';
            for (std::size_t k = 0; k < r.members.size(); ++k) {
                if (k) out << ' ';
                out << r.members[k];
            }
            out << '\n';
        }
        writePurityCsv(out, "rolePurity", report.rolePurity);
        for (const auto& c : report.symbols) {
            out << "symbol," << c.symbolId << ',' << c.occurrences << '\n';
            for (std::size_t k = 0; k < c.topTokens.size(); ++k)
                out << "symbolTop," << c.symbolId << ',' << k << ',' << csvSafe(c.topTokens[k].token)
                    << ',' << fmt17(c.topTokens[k].similarity) << ','
                    << c.topTokens[k].recordIndex << '\n';
        }
        writePurityCsv(out, "symbolPurity", report.symbolPurity);
        for (std::size_t i = 0; i < report.polysemy.size(); ++i) {
            const auto& t = report.polysemy[i];
            out << "polysemyWord," << i << ',' << csvSafe(t.word) << ',' << t.total << '\n';
            for (std::size_t r = 0; r < t.contextLabels.size(); ++r)
                out << "polysemyContext," << i << ',' << r << ',' << csvSafe(t.contextLabels[r])
                    << '\n';
            for (std::size_t c = 0; c < t.symbolIds.size(); ++c)
                out << "polysemySymbol," << i << ',' << c << ',' << t.symbolIds[c] << '\n';
            for (std::size_t r = 0; r < t.counts.size(); ++r)
                for (std::size_t c = 0; c < t.counts[r].size(); ++c)
                    out << "polysemyCount," << i << ',' << r << ',' << c << ',' << t.counts[r][c]
                        << '\n';
        }
    }
    if (!out)
        throw IoError("writeReport: write failed for " + path);
}

InterpretationReport readReport(const std::string& path, ReportFormat fmt) {
    std::ifstream in(path);
    if (!in)
        throw IoError("readReport: cannot open " + path);
    InterpretationReport rep;

    if (fmt == ReportFormat::Json) {
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw IoError("readReport: " + path + ": " + e.what());
        }
        rep.attention.meanMaxComponent = j.at("attention").at("meanMaxComponent").get<double>();
        rep.attention.meanMaxRole = j.at("attention").at("meanMaxRole").get<double>();
        rep.attention.meanMaxSymbol = j.at("attention").at("meanMaxSymbol").get<double>();
        rep.attention.meanQ = j.at("attention").at("meanQ").get<double>();
        for (const auto& r : j.at("roles")) {
            RoleAssignment a;
            a.roleId = r.at("roleId").get<int>();
            a.threshold = r.at("threshold").get<double>();
            a.members = r.at("members").get<std::vector<int>>();
            rep.roles.push_back(std::move(a));
        }
        rep.rolePurity = readPurityJson(j.at("rolePurity"));
        for (const auto& c : j.at("symbols")) {
            SymbolClusterSummary s;
            s.symbolId = c.at("symbolId").get<int>();
            s.occurrences = c.at("occurrences").get<int>();
            for (const auto& t : c.at("topTokens")) {
                SymbolEntry e;
                e.token = t.at("token").get<std::string>();
                e.similarity = t.at("similarity").get<double>();
                e.recordIndex = t.at("recordIndex").get<int>();
                s.topTokens.push_back(std::move(e));
            }
            rep.symbols.push_back(std::move(s));
        }
        rep.symbolPurity = readPurityJson(j.at("symbolPurity"));
        for (const auto& t : j.at("polysemy")) {
            PolysemyTable p;
            p.word = t.at("word").get<std::string>();
            p.contextLabels = t.at("contextLabels").get<std::vector<std::string>>();
            p.symbolIds = t.at("symbolIds").get<std::vector<int>>();
            p.counts = t.at("counts").get<std::vector<std::vector<int>>>();
            p.total = t.at("total").get<int>();
            rep.polysemy.push_back(std::move(p));
        }
        return rep;
    }

    std::string line;
    if (!std::getline(in, line))
        throw IoError("readReport: missing header in " + path);
    std::map<int, SymbolClusterSummary> symbols;
    std::size_t lineNo = 1;
    auto fail = [&](const std::string& why) {
        throw IoError("readReport: line " + std::to_string(lineNo) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::istringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) f.push_back(field);
        if (f.empty()) continue;
        const std::string& tag = f[0];
        auto need = [&](std::size_t n) {
            if (f.size() < n + 1) fail("expected " + std::to_string(n) + " fields after " + tag);
        };
        if (tag == "attention") {
            need(4);
            rep.attention.meanMaxComponent = std::stod(f[1]);
            rep.attention.meanQ = std::stod(f[2]);
            rep.attention.meanMaxSymbol = std::stod(f[3]);
            rep.attention.meanMaxRole = std::stod(f[4]);
        } else if (tag == "role") {
            need(3);
            RoleAssignment a;
            a.roleId = std::stoi(f[1]);
            a.threshold = std::stod(f[2]);
            if (f.size() > 4 && !f[4].empty()) {
                std::istringstream ms(f[4]);
                int v = 0;
                while (ms >> v) a.members.push_back(v);
            }
            rep.roles.push_back(std::move(a));
        } else if (tag == "rolePurityCount" || tag == "symbolPurityCount") {
            need(3);
            auto& p = tag[0] == 'r' ? rep.rolePurity : rep.symbolPurity;
            p.counts[std::stoi(f[1])][f[2]] = std::stoi(f[3]);
        } else if (tag == "rolePurityRow" || tag == "symbolPurityRow") {
            need(3);
            auto& p = tag[0] == 'r' ? rep.rolePurity : rep.symbolPurity;
            p.pLabelGivenCluster[std::stoi(f[1])][f[2]] = std::stod(f[3]);
        } else if (tag == "rolePurityCol" || tag == "symbolPurityCol") {
            need(3);
            auto& p = tag[0] == 'r' ? rep.rolePurity : rep.symbolPurity;
            p.pClusterGivenLabel[f[1]][std::stoi(f[2])] = std::stod(f[3]);
        } else if (tag == "rolePurityTotal" || tag == "symbolPurityTotal") {
            need(1);
            auto& p = tag[0] == 'r' ? rep.rolePurity : rep.symbolPurity;
            p.totalCount = std::stoi(f[1]);
        } else if (tag == "symbol") {
            need(2);
            SymbolClusterSummary s;
            s.symbolId = std::stoi(f[1]);
            s.occurrences = std::stoi(f[2]);
            symbols[s.symbolId] = std::move(s);
        } else if (tag == "symbolTop") {
            need(5);
            SymbolEntry e;
            e.token = f[3];
            e.similarity = std::stod(f[4]);
            e.recordIndex = std::stoi(f[5]);
            symbols[std::stoi(f[1])].topTokens.push_back(std::move(e));
        } else if (tag == "polysemyWord") {
            need(3);
            const auto idx = static_cast<std::size_t>(std::stoi(f[1]));
            if (rep.polysemy.size() <= idx) rep.polysemy.resize(idx + 1);
            rep.polysemy[idx].word = f[2];
            rep.polysemy[idx].total = std::stoi(f[3]);
        } else if (tag == "polysemyContext") {
            need(3);
            auto& t = rep.polysemy.at(static_cast<std::size_t>(std::stoi(f[1])));
            const auto r = static_cast<std::size_t>(std::stoi(f[2]));
            if (t.contextLabels.size() <= r) t.contextLabels.resize(r + 1);
            t.contextLabels[r] = f[3];
        } else if (tag == "polysemySymbol") {
            need(3);
            auto& t = rep.polysemy.at(static_cast<std::size_t>(std::stoi(f[1])));
            const auto c = static_cast<std::size_t>(std::stoi(f[2]));
            if (t.symbolIds.size() <= c) t.symbolIds.resize(c + 1);
            t.symbolIds[c] = std::stoi(f[3]);
        } else if (tag == "polysemyCount") {
            need(4);
            auto& t = rep.polysemy.at(static_cast<std::size_t>(std::stoi(f[1])));
            const auto r = static_cast<std::size_t>(std::stoi(f[2]));
            const auto c = static_cast<std::size_t>(std::stoi(f[3]));
            if (t.counts.size() <= r) t.counts.resize(r + 1);
            if (t.counts[r].size() <= c) t.counts[r].resize(c + 1);
            t.counts[r][c] = std::stoi(f[4]);
        } else {
            fail("unknown section '" + tag + "'");
        }
    }
    for (auto& [id, s] : symbols) {
        (void)id;
        rep.symbols.push_back(std::move(s));
    }
    return rep;
}

}  // namespace tprn
