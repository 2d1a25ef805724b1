#include "tprn/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace tprn {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint layout assumes little-endian doubles");

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

std::string base64Encode(const unsigned char* data, std::size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= len; i += 3) {
        const unsigned v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    if (i + 1 == len) {
        const unsigned v = data[i] << 16;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == len) {
        const unsigned v = (data[i] << 16) | (data[i + 1] << 8);
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::vector<unsigned char> base64Decode(const std::string& s) {
    if (s.size() % 4 != 0)
        throw IoError("base64: truncated payload");
    static const auto table = [] {
        std::array<int, 256> t{};
        t.fill(-1);
        for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(kAlphabet[i])] = i;
        return t;
    }();
    std::vector<unsigned char> out;
    out.reserve(s.size() / 4 * 3);
    for (std::size_t i = 0; i < s.size(); i += 4) {
        int vals[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = s[i + k];
            if (c == '=') {
                if (i + 4 != s.size() || k < 2)
                    throw IoError("base64: misplaced padding");
                vals[k] = 0;
                ++pad;
            } else {
                vals[k] = table[static_cast<unsigned char>(c)];
                if (vals[k] < 0)
                    throw IoError("base64: invalid character");
                if (pad > 0)
                    throw IoError("base64: data after padding");
            }
        }
        const unsigned v = (vals[0] << 18) | (vals[1] << 12) | (vals[2] << 6) | vals[3];
        out.push_back((v >> 16) & 0xFF);
        if (pad < 2) out.push_back((v >> 8) & 0xFF);
        if (pad < 1) out.push_back(v & 0xFF);
    }
    return out;
}

namespace {

std::string encodeDoubles(const double* data, std::size_t n) {
    return base64Encode(reinterpret_cast<const unsigned char*>(data), n * sizeof(double));
}

Vector decodeDoubles(const std::string& b64, std::size_t expected, const std::string& what) {
    const auto bytes = base64Decode(b64);
    if (bytes.size() != expected * sizeof(double))
        throw IoError("checkpoint: " + what + " has " + std::to_string(bytes.size()) +
                      " bytes, expected " + std::to_string(expected * sizeof(double)));
    Vector out(expected);
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

// FNV-1a over the named payloads, enough to catch corruption
class Checksum {
public:
    void add(const std::string& name, const double* data, std::size_t n) {
        feed(name.data(), name.size());
        const char zero = 0;
        feed(&zero, 1);
        feed(reinterpret_cast<const char*>(data), n * sizeof(double));
    }
    std::string hex() const {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
        return buf;
    }

private:
    void feed(const char* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            state_ ^= static_cast<unsigned char>(p[i]);
            state_ *= 0x100000001b3ULL;
        }
    }
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

json hyperToJson(const Hyper& h) {
    return {{"nSymbols", h.nSymbols},     {"nRoles", h.nRoles},
            {"dSymbols", h.dSymbols},     {"dRoles", h.dRoles},
            {"dWord", h.dWord},           {"gateEnabled", h.gateEnabled},
            {"gatedFeedback", h.gatedFeedback}};
}

Hyper hyperFromJson(const json& j) {
    Hyper h;
    h.nSymbols = j.at("nSymbols").get<int>();
    h.nRoles = j.at("nRoles").get<int>();
    h.dSymbols = j.at("dSymbols").get<int>();
    h.dRoles = j.at("dRoles").get<int>();
    h.dWord = j.at("dWord").get<int>();
    h.gateEnabled = j.at("gateEnabled").get<bool>();
    h.gatedFeedback = j.at("gatedFeedback").get<bool>();
    return h;
}

}  // namespace

void saveCheckpoint(const std::string& path, const Checkpoint& ckpt) {
    ModelParams& params = const_cast<ModelParams&>(ckpt.params);
    params.validate();
    auto refs = paramRefs(params);

    Checksum sum;
    json groups = json::array();
    for (const auto& r : refs) {
        sum.add(r.name, r.data, r.size);
        groups.push_back({{"name", r.name}, {"size", r.size}, {"data", encodeDoubles(r.data, r.size)}});
    }

    json j;
    j["formatVersion"] = ckpt.formatVersion;
    j["hyper"] = hyperToJson(params.hyper);
    j["taskKind"] = params.classifier ? "tokenClassification" : "spanPointing";
    j["numLabels"] = params.numLabels;
    j["params"] = std::move(groups);
    if (ckpt.optimizer) {
        const auto& st = *ckpt.optimizer;
        if (st.accumGradSq.size() != refs.size())
            throw ConfigError("saveCheckpoint: optimizer state does not match parameters");
        json eg = json::array(), eu = json::array();
        for (std::size_t i = 0; i < refs.size(); ++i) {
            sum.add(refs[i].name + "#eg", st.accumGradSq[i].data(), st.accumGradSq[i].size());
            sum.add(refs[i].name + "#eu", st.accumUpdateSq[i].data(), st.accumUpdateSq[i].size());
            eg.push_back(encodeDoubles(st.accumGradSq[i].data(), st.accumGradSq[i].size()));
            eu.push_back(encodeDoubles(st.accumUpdateSq[i].data(), st.accumUpdateSq[i].size()));
        }
        j["optimizer"] = {{"rho", st.rho},
                          {"epsilon", st.epsilon},
                          {"accumGradSq", std::move(eg)},
                          {"accumUpdateSq", std::move(eu)}};
    }
    j["meta"] = {{"seed", ckpt.meta.seed}, {"epoch", ckpt.meta.epoch}, {"createdAt", ckpt.meta.createdAt}};
    j["checksum"] = sum.hex();

    std::ofstream out(path);
    if (!out)
        throw IoError("saveCheckpoint: cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out)
        throw IoError("saveCheckpoint: write failed for " + path);
}

Checkpoint loadCheckpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("loadCheckpoint: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("loadCheckpoint: " + path + ": " + e.what());
    }

    Checkpoint ckpt;
    ckpt.formatVersion = j.at("formatVersion").get<int>();
    if (ckpt.formatVersion != Checkpoint::kFormatVersion)
        throw IoError("loadCheckpoint: unsupported format version " +
                      std::to_string(ckpt.formatVersion));

    const Hyper h = hyperFromJson(j.at("hyper"));
    const std::string task = j.at("taskKind").get<std::string>();
    const int numLabels = j.at("numLabels").get<int>();
    ckpt.params = ModelParams::init(
        h, task == "tokenClassification" ? TaskKind::TokenClassification : TaskKind::SpanPointing,
        task == "tokenClassification" ? numLabels : 0, 0);

    auto refs = paramRefs(ckpt.params);
    const auto& groups = j.at("params");
    if (groups.size() != refs.size())
        throw IoError("loadCheckpoint: expected " + std::to_string(refs.size()) +
                      " parameter groups, found " + std::to_string(groups.size()));

    Checksum sum;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const auto& g = groups[i];
        if (g.at("name").get<std::string>() != refs[i].name)
            throw IoError("loadCheckpoint: parameter group '" + g.at("name").get<std::string>() +
                          "' does not match expected '" + refs[i].name + "'");
        if (g.at("size").get<std::size_t>() != refs[i].size)
            throw IoError("loadCheckpoint: size mismatch in " + refs[i].name);
        const Vector vals = decodeDoubles(g.at("data").get<std::string>(), refs[i].size, refs[i].name);
        std::memcpy(refs[i].data, vals.data(), refs[i].size * sizeof(double));
        sum.add(refs[i].name, refs[i].data, refs[i].size);
    }

    if (j.contains("optimizer")) {
        const auto& o = j["optimizer"];
        AdaDeltaState st;
        st.rho = o.at("rho").get<double>();
        st.epsilon = o.at("epsilon").get<double>();
        const auto& eg = o.at("accumGradSq");
        const auto& eu = o.at("accumUpdateSq");
        if (eg.size() != refs.size() || eu.size() != refs.size())
            throw IoError("loadCheckpoint: optimizer group count mismatch");
        for (std::size_t i = 0; i < refs.size(); ++i) {
            st.accumGradSq.push_back(
                decodeDoubles(eg[i].get<std::string>(), refs[i].size, refs[i].name + "#eg"));
            st.accumUpdateSq.push_back(
                decodeDoubles(eu[i].get<std::string>(), refs[i].size, refs[i].name + "#eu"));
            sum.add(refs[i].name + "#eg", st.accumGradSq[i].data(), st.accumGradSq[i].size());
            sum.add(refs[i].name + "#eu", st.accumUpdateSq[i].data(), st.accumUpdateSq[i].size());
        }
        ckpt.optimizer = std::move(st);
    }

    const std::string stored = j.at("checksum").get<std::string>();
    if (stored != sum.hex())
        throw IoError("loadCheckpoint: checksum mismatch (stored " + stored + ", computed " +
                      sum.hex() + ")");

    ckpt.meta.seed = j.at("meta").at("seed").get<std::uint64_t>();
    ckpt.meta.epoch = j.at("meta").at("epoch").get<int>();
    ckpt.meta.createdAt = j.at("meta").at("createdAt").get<std::string>();
    return ckpt;
}

}  // namespace tprn
