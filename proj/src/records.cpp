#include "ecrt/records.hpp"

#include <cmath>
#include <cstdio>
#include <memory>

namespace ecrt {

ObservationSource source_from(const std::vector<Observation>& data) {
    auto pos = std::make_shared<std::size_t>(0);
    return [&data, pos]() -> std::optional<Observation> {
        if (*pos >= data.size()) return std::nullopt;
        return data[(*pos)++];
    };
}

namespace {

double number_field(const nlohmann::json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end()) throw Error(std::string("missing key \"") + key + "\"");
    if (!it->is_number()) throw Error(std::string("key \"") + key + "\" is not a number");
    return it->get<double>();
}

}  // namespace

RawRecord parse_record(const std::string& line, bool require_y) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error("record is not an object");
    RawRecord r;
    r.x = number_field(j, "x");
    if (require_y || j.contains("y")) r.y = number_field(j, "y");
    const auto z = j.find("z");
    if (z == j.end() || !z->is_array()) throw Error("key \"z\" must be an array");
    r.z.reserve(z->size());
    for (const auto& v : *z) {
        if (!v.is_number()) throw Error("z entries must be numbers");
        r.z.push_back(v.get<double>());
    }
    return r;
}

RecordReader::RecordReader(std::istream& in, std::optional<std::size_t> d, bool require_y)
    : in_(in), d_(d), require_y_(require_y) {}

std::optional<Observation> RecordReader::next() {
    std::string text;
    while (std::getline(in_, text)) {
        ++line_;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            RawRecord raw = parse_record(text, require_y_);
            if (!d_) d_ = raw.z.size();
            return validate_observation(raw, *d_);
        } catch (const RecordError&) {
            throw;
        } catch (const Error& e) {
            throw RecordError(line_, e.what());
        }
    }
    return std::nullopt;
}

std::vector<Observation> read_records(std::istream& in, std::optional<std::size_t> d,
                                      bool require_y) {
    RecordReader reader(in, d, require_y);
    std::vector<Observation> out;
    while (auto obs = reader.next()) out.push_back(std::move(*obs));
    return out;
}

void write_record(std::ostream& out, const Observation& obs) {
    nlohmann::json j = {{"x", obs.x}, {"y", obs.y}, {"z", obs.z}};
    out << j.dump() << '\n';
}

nlohmann::json to_json(const TestConfig& cfg) {
    return {{"alpha", cfg.alpha},
            {"n_init", cfg.n_init},
            {"batch_sizes", cfg.batch_sizes},
            {"k_derandomize", cfg.k_derandomize},
            {"grid_size", cfg.grid_size},
            {"score_kind", to_string(cfg.score_kind)},
            {"score_magnitude", cfg.score_magnitude},
            {"seed", cfg.seed}};
}

TestConfig test_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw DomainError("config must be an object");
    static const char* known[] = {"alpha",     "n_init",     "batch_sizes",     "k_derandomize",
                                  "grid_size", "score_kind", "score_magnitude", "seed"};
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw DomainError("unknown config key '" + key + "'");
    }
    TestConfig cfg;
    try {
        cfg.alpha = j.value("alpha", cfg.alpha);
        cfg.n_init = j.value("n_init", cfg.n_init);
        cfg.batch_sizes = j.value("batch_sizes", cfg.batch_sizes);
        cfg.k_derandomize = j.value("k_derandomize", cfg.k_derandomize);
        cfg.grid_size = j.value("grid_size", cfg.grid_size);
        if (j.contains("score_kind"))
            cfg.score_kind = score_kind_from_string(j.at("score_kind").get<std::string>());
        cfg.score_magnitude = j.value("score_magnitude", cfg.score_magnitude);
        cfg.seed = j.value("seed", cfg.seed);
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("bad config value: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string content_hash(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string config_hash(const TestConfig& cfg) { return content_hash(to_json(cfg).dump()); }

}  // namespace ecrt
