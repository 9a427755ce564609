#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ecrt/core.hpp"
#include "json.hpp"

namespace ecrt {

/// Malformed input line; carries the 1-based line number.
struct RecordError : Error {
    RecordError(long line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_no(line) {}
    long line_no;
};

/// Pulls the next observation; nullopt at end of stream.
using ObservationSource = std::function<std::optional<Observation>()>;

ObservationSource source_from(const std::vector<Observation>& data);

/// Parses one newline-delimited record {"x": num, "y": num, "z": [num...]}.
/// With require_y false, a missing "y" reads as 0.
RawRecord parse_record(const std::string& line, bool require_y = true);

/// Reads validated observations line by line. Blank lines are skipped.
class RecordReader {
public:
    RecordReader(std::istream& in, std::optional<std::size_t> d, bool require_y = true);

    std::optional<Observation> next();
    long line() const { return line_; }
    std::size_t dim() const { return d_.value_or(0); }

private:
    std::istream& in_;
    std::optional<std::size_t> d_;
    bool require_y_;
    long line_ = 0;
};

std::vector<Observation> read_records(std::istream& in, std::optional<std::size_t> d,
                                      bool require_y = true);
void write_record(std::ostream& out, const Observation& obs);

nlohmann::json to_json(const TestConfig& cfg);
TestConfig test_config_from_json(const nlohmann::json& j);

/// FNV-1a over the canonical JSON text, as 16 hex digits.
std::string content_hash(const std::string& text);
std::string config_hash(const TestConfig& cfg);

}  // namespace ecrt
