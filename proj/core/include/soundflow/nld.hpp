#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "soundflow/analysis.hpp"

namespace soundflow {

// One annotated event window. Times carry one decimal place of precision.
struct EventAnnotation {
    std::string label;
    double start_s = 0.0;
    double end_s = 0.0;
    Category pitch = Category::Normal;
    Category energy = Category::Normal;

    bool operator==(const EventAnnotation&) const = default;
};

// Nearest multiple of 0.1 s as the canonical double for that decimal (the
// same value parsing the rendered "%.1f" text produces), so annotation times
// survive a render/parse round trip bit-exactly.
double snap_time(double seconds);

// Caption grammar: one clause per event,
//   "<Label>, Start at <s>s and End at <e>s, it has <P> Pitch and <E> Energy."
// clauses joined by a single space, events in start-time order, times with
// one decimal digit.
std::string render_nld(std::vector<EventAnnotation> annotations);

// Thrown by parse_nld; `position` is the character offset where parsing
// failed.
class NldParseError : public std::invalid_argument {
public:
    NldParseError(const std::string& what, std::size_t position);
    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

// Exact inverse of render_nld on well-formed captions. Grammar violations,
// unknown category words, and non-increasing time windows are rejected with
// the offending position.
std::vector<EventAnnotation> parse_nld(const std::string& caption);

}  // namespace soundflow
