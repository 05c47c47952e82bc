// Copyright 2026 The fvbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fvbench/corpus.hpp"
#include "fvbench/errors.hpp"

using namespace fvbench;
using namespace fvbench::corpus;

namespace {

std::vector<NameEntry> parse(const std::string& text) {
    std::istringstream in(text);
    return parse_name_list(in);
}

class CountingProvider final : public ImageProvider {
public:
    explicit CountingProvider(std::vector<ProviderRef> refs, int failures = 0)
        : refs_(std::move(refs)), failures_(failures) {}
    std::vector<ProviderRef> fetch(const std::string&, std::size_t max_results, const FetchWindow&) override {
        ++calls;
        if (failures_ > 0) {
            --failures_;
            throw TransportError("timeout");
        }
        return {refs_.begin(), refs_.begin() + static_cast<std::ptrdiff_t>(std::min(max_results, refs_.size()))};
    }
    int calls = 0;

private:
    std::vector<ProviderRef> refs_;
    int failures_;
};

Date ymd(int y, unsigned m, unsigned d) { return Date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}}; }

}  // namespace

TEST_CASE("name list with eight demographic categories of ten") {
    std::string text = "name,gender,group,age_band,country\n";
    const char* genders[] = {"female", "male"};
    const char* groups[] = {"asian", "black", "indian", "white"};
    int n = 0;
    for (auto g : genders)
        for (auto r : groups)
            for (int i = 0; i < 10; ++i) text += "Person " + std::to_string(n++) + "," + g + "," + r + ",adult,\n";
    const auto entries = parse(text);
    REQUIRE(entries.size() == 80);
    std::set<std::string> keys;
    for (const auto& e : entries) keys.insert(e.demographic.str());
    CHECK(keys.size() == 8);
    CHECK_FALSE(entries[0].country.has_value());
}

TEST_CASE("empty name list") {
    CHECK(parse("").empty());
    CHECK(parse("name,gender,group,age_band,country\n").empty());
}

TEST_CASE("normalized duplicates are rejected") {
    CHECK_THROWS_AS(parse("name,gender,group,age_band,country\nA. Smith,female,white,adult,\na smith,male,white,adult,\n"),
                    ValidationError);
    CHECK_THROWS_AS(parse("name,gender,group,age_band,country\nJos\xC3\xA9 Ruiz,male,hispanic,adult,\nJose  Ruiz,male,hispanic,adult,\n"),
                    ValidationError);
    CHECK(normalize_name("  Ren\xC3\xA9\tMAGRITTE ") == "rene magritte");
}

TEST_CASE("malformed rows report their line") {
    try {
        parse("name,gender,group,age_band,country\nA,female,white,adult,\nB,female,white\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    CHECK_THROWS_AS(parse("name,gender,group,age_band,country\nA,female,martian,adult,\n"), ValidationError);
    CHECK_THROWS_AS(parse("who,gender,group,age_band,country\n"), ParseError);
}

TEST_CASE("query strings") {
    NameEntry e{"Jane Doe", {"female", "black", "adult"}, std::nullopt};
    CHECK(build_query(e, "q1").query_string == "Jane Doe");
    e.country = "Kenya";
    CHECK(build_query(e, "q1").query_string == "Jane Doe Kenya");
    e.name = "Jane   Doe";
    e.country.reset();
    CHECK(build_query(e, "q1").query_string == "Jane Doe");
    const std::vector<NameEntry> two{e, e};
    const auto qs = build_queries(two);
    CHECK(qs[0].query_id != qs[1].query_id);
}

TEST_CASE("fetch window drops old references") {
    std::vector<ProviderRef> refs;
    for (int i = 0; i < 90; ++i) refs.push_back({"in" + std::to_string(i), ymd(2023, 6, 1)});
    for (int i = 0; i < 10; ++i) refs.push_back({"old" + std::to_string(i), ymd(2021, 6, 1)});
    CountingProvider provider(refs);
    FetchOptions opts;
    opts.reference_date = ymd(2024, 1, 1);
    const Query q{"q1", "Jane Doe", 0};
    auto got = fetch_image_refs(q, provider, opts);
    CHECK(got.size() == 90);
    CHECK(got.front().url == "in0");

    opts.window_months = 60;
    CHECK(fetch_image_refs(q, provider, opts).size() == 100);
}

TEST_CASE("undated references follow the keep flag") {
    CountingProvider provider({{"a", std::nullopt}, {"b", ymd(2023, 12, 1)}});
    FetchOptions opts;
    CHECK(fetch_image_refs({"q", "x", 0}, provider, opts).size() == 2);
    opts.keep_undated = false;
    CHECK(fetch_image_refs({"q", "x", 0}, provider, opts).size() == 1);
}

TEST_CASE("fetch retries transient provider failures") {
    CountingProvider provider({{"a", ymd(2023, 12, 1)}}, 2);
    const std::vector<Query> qs{{"q1", "x", 0}};
    const auto got = fetch_all(qs, provider, FetchOptions{}, 1);
    CHECK(got[0].size() == 1);
    CHECK(provider.calls == 3);

    CountingProvider empty({});
    CHECK(fetch_all(qs, empty, FetchOptions{}, 1)[0].empty());
}

TEST_CASE("manifest provider") {
    auto p = ManifestProvider::from_json_text(R"({"Jane Doe": ["u1", {"url": "u2", "published_at": "2023-05-01"}]})");
    const auto refs = p.fetch("Jane Doe", 10, FetchWindow{ymd(2024, 1, 1), 12});
    REQUIRE(refs.size() == 2);
    CHECK(refs[1].published_at == ymd(2023, 5, 1));
    CHECK(p.fetch("Nobody", 10, FetchWindow{ymd(2024, 1, 1), 12}).empty());
    CHECK_THROWS_AS(ManifestProvider::from_json_text("[1,2]"), ValidationError);
}

TEST_CASE("deduplicate") {
    SUBCASE("orthogonal vectors are all kept") {
        const std::vector<EmbeddedItem> items{{"a", {1, 0, 0}}, {"b", {0, 1, 0}}, {"c", {0, 0, 1}}};
        CHECK(deduplicate(items).size() == 3);
    }
    SUBCASE("two identical vectors and one orthogonal") {
        const std::vector<EmbeddedItem> items{{"a", {1, 0}}, {"b", {1, 0}}, {"c", {0, 1}}};
        const auto kept = deduplicate(items);
        CHECK(kept == std::vector<std::string>{"a", "c"});
    }
    SUBCASE("the medoid of {v, v, v'} is kept") {
        // cos(v, v') = 0.95
        const double s = std::sqrt(1 - 0.95 * 0.95);
        const std::vector<EmbeddedItem> items{{"x", {0.95, s}}, {"y", {1, 0}}, {"z", {1, 0}}};
        CHECK(deduplicate(items) == std::vector<std::string>{"y"});
    }
    SUBCASE("idempotent and order invariant") {
        std::vector<EmbeddedItem> items{{"a", {1, 0.1}}, {"b", {1, 0.12}}, {"c", {0, 1}}, {"d", {0.05, 1}}, {"e", {1, -1}}};
        const auto kept = deduplicate(items);
        std::vector<EmbeddedItem> again;
        for (const auto& it : items)
            if (std::find(kept.begin(), kept.end(), it.id) != kept.end()) again.push_back(it);
        CHECK(deduplicate(again) == kept);
        std::reverse(items.begin(), items.end());
        CHECK(deduplicate(items) == kept);
    }
    SUBCASE("zero vector") {
        const std::vector<EmbeddedItem> items{{"a", {0, 0}}};
        CHECK_THROWS_AS(deduplicate(items), ValidationError);
    }
}

TEST_CASE("iso dates") {
    CHECK(format_iso_date(parse_iso_date("2023-02-28")) == "2023-02-28");
    CHECK_THROWS_AS(parse_iso_date("2023-02-30"), ValidationError);
    CHECK_THROWS_AS(parse_iso_date("yesterday"), ValidationError);
}
