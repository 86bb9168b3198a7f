#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "soundflow/nld.hpp"
#include "soundflow/rng.hpp"

using namespace soundflow;

namespace {

EventAnnotation ev(std::string label, double s, double e, Category p, Category g) {
    return EventAnnotation{std::move(label), s, e, p, g};
}

}  // namespace

TEST_CASE("render produces the exact template") {
    const std::string caption =
        render_nld({ev("Dog bark", 3.6, 7.4, Category::Normal, Category::Low)});
    CHECK(caption ==
          "Dog bark, Start at 3.6s and End at 7.4s, it has Normal Pitch and Low Energy.");
}

TEST_CASE("clauses come out in start-time order, one space apart") {
    const std::string caption = render_nld({
        ev("Tone", 5.0, 6.0, Category::High, Category::High),
        ev("Hum", 0.5, 2.0, Category::Low, Category::Normal),
    });
    CHECK(caption ==
          "Hum, Start at 0.5s and End at 2.0s, it has Low Pitch and Normal Energy. "
          "Tone, Start at 5.0s and End at 6.0s, it has High Pitch and High Energy.");
}

TEST_CASE("empty annotation list renders an empty caption") {
    CHECK(render_nld({}).empty());
}

TEST_CASE("render input validation") {
    CHECK_THROWS_AS(render_nld({ev("", 0.0, 1.0, Category::Low, Category::Low)}),
                    std::invalid_argument);
    CHECK_THROWS_WITH_AS(render_nld({ev("a, b", 0.0, 1.0, Category::Low, Category::Low)}),
                         doctest::Contains("\",\""), std::invalid_argument);
    CHECK_THROWS_AS(render_nld({ev("Tone", 2.0, 1.0, Category::Low, Category::Low)}),
                    std::invalid_argument);
}

TEST_CASE("parse inverts render on random annotation lists") {
    Rng rng(77);
    const std::vector<std::string> labels = {"Drone", "Thump", "Hum",  "Tone",
                                             "Whistle", "Chirp", "Dog bark"};
    const std::vector<Category> cats = {Category::Low, Category::Normal, Category::High};
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<EventAnnotation> events;
        const int k = 1 + static_cast<int>(rng.uniform_int(0, 3));
        for (int i = 0; i < k; ++i) {
            // times on the 0.1 s grid inside a 10 s clip
            const int start = static_cast<int>(rng.uniform_int(0, 90));
            const int len = 1 + static_cast<int>(rng.uniform_int(0, 9));
            events.push_back(ev(labels[rng.uniform_int(0, labels.size() - 1)],
                                static_cast<double>(start) / 10.0,
                                static_cast<double>(start + len) / 10.0,
                                cats[rng.uniform_int(0, 2)], cats[rng.uniform_int(0, 2)]));
        }
        const std::string caption = render_nld(events);
        const std::vector<EventAnnotation> parsed = parse_nld(caption);
        // render sorts, so compare against the sorted original
        const std::vector<EventAnnotation> expected = parse_nld(render_nld(parsed));
        REQUIRE(parsed.size() == events.size());
        CHECK(parsed == expected);
        // bit-exact round trip of every field including times
        CHECK(render_nld(parsed) == caption);
    }
}

TEST_CASE("parse round-trips the worked caption bit-exactly") {
    const std::string caption =
        "Dog bark, Start at 3.6s and End at 7.4s, it has Normal Pitch and Low Energy.";
    const auto events = parse_nld(caption);
    REQUIRE(events.size() == 1);
    CHECK(events[0].label == "Dog bark");
    CHECK(events[0].start_s == 3.6);
    CHECK(events[0].end_s == 7.4);
    CHECK(events[0].pitch == Category::Normal);
    CHECK(events[0].energy == Category::Low);
    CHECK(render_nld(events) == caption);
}

TEST_CASE("snap_time produces the same double that parsing produces") {
    // 36 * 0.1 accumulates differently than 3.6 parsed from text; snap_time
    // must agree with the parser's value.
    const double computed = 36.0 * 0.1;
    CHECK(snap_time(computed) == 3.6);
    CHECK(snap_time(0.30000000000000004) == 0.3);
}

TEST_CASE("parse rejections carry positions") {
    auto position_of = [](const std::string& caption) -> std::size_t {
        try {
            parse_nld(caption);
        } catch (const NldParseError& e) {
            return e.position();
        }
        return static_cast<std::size_t>(-1);
    };

    SUBCASE("start must precede end") {
        const std::string bad =
            "Tone, Start at 7.4s and End at 3.6s, it has Normal Pitch and Low Energy.";
        CHECK_THROWS_WITH_AS(parse_nld(bad), doctest::Contains("ends before"), NldParseError);
        CHECK(position_of(bad) == bad.find("3.6s"));
    }
    SUBCASE("malformed category word") {
        const std::string bad =
            "Tone, Start at 1.0s and End at 2.0s, it has Shrill Pitch and Low Energy.";
        CHECK_THROWS_WITH_AS(parse_nld(bad), doctest::Contains("category"), NldParseError);
        CHECK(position_of(bad) == bad.find("Shrill"));
    }
    SUBCASE("missing label comma") {
        CHECK_THROWS_AS(parse_nld("Tone Start at 1.0s"), NldParseError);
    }
    SUBCASE("two decimal digits rejected") {
        CHECK_THROWS_AS(
            parse_nld("Tone, Start at 1.05s and End at 2.0s, it has Low Pitch and Low Energy."),
            NldParseError);
    }
    SUBCASE("missing final period") {
        CHECK_THROWS_AS(
            parse_nld("Tone, Start at 1.0s and End at 2.0s, it has Low Pitch and Low Energy"),
            NldParseError);
    }
    SUBCASE("empty caption") { CHECK_THROWS_AS(parse_nld(""), NldParseError); }
    SUBCASE("double space between clauses") {
        const std::string one =
            "Tone, Start at 1.0s and End at 2.0s, it has Low Pitch and Low Energy.";
        CHECK_THROWS_AS(parse_nld(one + "  " + one), NldParseError);
    }
}
