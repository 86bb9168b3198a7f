#include "soundflow/nld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace soundflow {

namespace {

std::string format_time(double seconds) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", seconds);
    return buf;
}

// Tracks a cursor through the caption and reports failures with its offset.
class Parser {
public:
    explicit Parser(const std::string& text) : text_(text) {}

    bool done() const { return pos_ >= text_.size(); }
    std::size_t pos() const { return pos_; }

    [[noreturn]] void reject(const std::string& why) const { throw NldParseError(why, pos_); }

    void expect(const std::string& literal) {
        if (text_.compare(pos_, literal.size(), literal) != 0)
            reject("expected \"" + literal + "\"");
        pos_ += literal.size();
    }

    // Everything up to the next ", " is the label.
    std::string label() {
        const std::size_t comma = text_.find(',', pos_);
        if (comma == std::string::npos) reject("expected \",\" after event label");
        std::string out = text_.substr(pos_, comma - pos_);
        if (out.empty()) reject("empty event label");
        if (out.front() == ' ' || out.back() == ' ')
            reject("event label has leading or trailing whitespace");
        pos_ = comma;
        return out;
    }

    // Seconds with exactly one decimal digit, e.g. "3.6".
    double seconds() {
        const std::size_t begin = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        if (pos_ == begin) reject("expected a time in seconds");
        if (pos_ >= text_.size() || text_[pos_] != '.') reject("expected \".\" in time");
        ++pos_;
        if (pos_ >= text_.size() || !std::isdigit(static_cast<unsigned char>(text_[pos_])))
            reject("expected exactly one digit after \".\"");
        ++pos_;
        if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
            reject("times carry exactly one decimal digit");
        return std::stod(text_.substr(begin, pos_ - begin));
    }

    Category category() {
        for (Category c : {Category::Low, Category::Normal, Category::High}) {
            const std::string name = category_name(c);
            if (text_.compare(pos_, name.size(), name) == 0) {
                pos_ += name.size();
                return c;
            }
        }
        reject("expected a category (Low, Normal or High)");
    }

private:
    const std::string& text_;
    std::size_t pos_ = 0;
};

}  // namespace

NldParseError::NldParseError(const std::string& what, std::size_t position)
    : std::invalid_argument(what + " at position " + std::to_string(position)),
      position_(position) {}

double snap_time(double seconds) { return std::round(seconds * 10.0) / 10.0; }

std::string render_nld(std::vector<EventAnnotation> annotations) {
    std::stable_sort(annotations.begin(), annotations.end(),
                     [](const EventAnnotation& a, const EventAnnotation& b) {
                         if (a.start_s != b.start_s) return a.start_s < b.start_s;
                         if (a.end_s != b.end_s) return a.end_s < b.end_s;
                         return a.label < b.label;
                     });
    std::string caption;
    for (const EventAnnotation& a : annotations) {
        if (a.label.empty())
            throw std::invalid_argument("render_nld: empty event label");
        if (a.label.find(',') != std::string::npos)
            throw std::invalid_argument("render_nld: label '" + a.label +
                                        "' contains \",\", which the grammar reserves");
        if (!(a.start_s >= 0.0) || !(a.start_s < a.end_s))
            throw std::invalid_argument("render_nld: bad window [" + format_time(a.start_s) +
                                        ", " + format_time(a.end_s) + "] for '" + a.label + "'");
        if (!caption.empty()) caption += ' ';
        caption += a.label;
        caption += ", Start at ";
        caption += format_time(a.start_s);
        caption += "s and End at ";
        caption += format_time(a.end_s);
        caption += "s, it has ";
        caption += category_name(a.pitch);
        caption += " Pitch and ";
        caption += category_name(a.energy);
        caption += " Energy.";
    }
    return caption;
}

std::vector<EventAnnotation> parse_nld(const std::string& caption) {
    Parser p(caption);
    if (p.done()) p.reject("empty caption");
    std::vector<EventAnnotation> out;
    while (true) {
        EventAnnotation a;
        a.label = p.label();
        p.expect(", Start at ");
        a.start_s = p.seconds();
        p.expect("s and End at ");
        const std::size_t end_pos = p.pos();
        a.end_s = p.seconds();
        if (a.start_s >= a.end_s) throw NldParseError("event ends before it starts", end_pos);
        p.expect("s, it has ");
        a.pitch = p.category();
        p.expect(" Pitch and ");
        a.energy = p.category();
        p.expect(" Energy.");
        out.push_back(std::move(a));
        if (p.done()) break;
        p.expect(" ");
        if (p.done()) p.reject("trailing space after final clause");
    }
    return out;
}

}  // namespace soundflow
