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

#include "fvbench/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "fvbench/csv.hpp"
#include "fvbench/errors.hpp"
#include "fvbench/union_find.hpp"
#include "parallel.hpp"

namespace fvbench::corpus {

namespace {

using json = nlohmann::json;

const std::vector<std::string> kNameListHeader = {"name", "gender", "group", "age_band", "country"};

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string ascii_lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// Decodes one UTF-8 code point starting at s[i]; advances i. Invalid bytes
// are passed through as their own value.
char32_t next_code_point(std::string_view s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    auto cont = [&](std::size_t k) -> int {
        if (i + k >= s.size()) return -1;
        const auto b = static_cast<unsigned char>(s[i + k]);
        return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
    };
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    if ((b0 & 0xE0) == 0xC0) {
        const int c1 = cont(1);
        if (c1 >= 0) {
            i += 2;
            return static_cast<char32_t>(((b0 & 0x1F) << 6) | c1);
        }
    } else if ((b0 & 0xF0) == 0xE0) {
        const int c1 = cont(1), c2 = cont(2);
        if (c1 >= 0 && c2 >= 0) {
            i += 3;
            return static_cast<char32_t>(((b0 & 0x0F) << 12) | (c1 << 6) | c2);
        }
    } else if ((b0 & 0xF8) == 0xF0) {
        const int c1 = cont(1), c2 = cont(2), c3 = cont(3);
        if (c1 >= 0 && c2 >= 0 && c3 >= 0) {
            i += 4;
            return static_cast<char32_t>(((b0 & 0x07) << 18) | (c1 << 12) | (c2 << 6) | c3);
        }
    }
    ++i;
    return b0;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

// Latin-1 Supplement U+00C0..U+00FF folded to lowercase ASCII. Empty entries
// (multiplication and division signs) are kept verbatim.
constexpr const char* kLatin1Fold[64] = {
    "a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e",  "e", "i", "i", "i", "i",
    "d", "n", "o", "o", "o", "o", "o",  "",  "o", "u", "u",  "u", "u", "y", "th", "ss",
    "a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e",  "e", "i", "i", "i", "i",
    "d", "n", "o", "o", "o", "o", "o",  "",  "o", "u", "u",  "u", "u", "y", "th", "y",
};

struct FoldRange {
    char32_t first;
    char32_t last;
    const char* ascii;
};

// Latin Extended-A U+0100..U+017F.
constexpr FoldRange kLatinExtAFold[] = {
    {0x100, 0x105, "a"}, {0x106, 0x10D, "c"}, {0x10E, 0x111, "d"}, {0x112, 0x11B, "e"},
    {0x11C, 0x123, "g"}, {0x124, 0x127, "h"}, {0x128, 0x131, "i"}, {0x132, 0x133, "ij"},
    {0x134, 0x135, "j"}, {0x136, 0x138, "k"}, {0x139, 0x142, "l"}, {0x143, 0x14B, "n"},
    {0x14C, 0x151, "o"}, {0x152, 0x153, "oe"}, {0x154, 0x159, "r"}, {0x15A, 0x161, "s"},
    {0x162, 0x167, "t"}, {0x168, 0x173, "u"}, {0x174, 0x175, "w"}, {0x176, 0x178, "y"},
    {0x179, 0x17E, "z"}, {0x17F, 0x17F, "s"},
};

bool is_combining_mark(char32_t cp) { return cp >= 0x300 && cp <= 0x36F; }

void require_in(const std::vector<std::string>& allowed, const std::string& value, const char* what,
                std::size_t line) {
    if (std::find(allowed.begin(), allowed.end(), value) == allowed.end())
        throw ValidationError(std::string("unknown ") + what + " '" + value + "' (line " +
                              std::to_string(line) + ")");
}

std::vector<std::string> lowered(const json& j) {
    std::vector<std::string> out;
    for (const auto& v : j) out.push_back(ascii_lower(v.get<std::string>()));
    return out;
}

std::vector<ProviderRef> parse_ref_list(const json& list, const std::string& query) {
    if (!list.is_array()) throw ValidationError("manifest entry for '" + query + "' must be an array");
    std::vector<ProviderRef> refs;
    for (const auto& item : list) {
        ProviderRef ref;
        if (item.is_string()) {
            ref.url = item.get<std::string>();
        } else {
            ref.url = item.at("url").get<std::string>();
            if (auto it = item.find("published_at"); it != item.end() && !it->is_null())
                ref.published_at = parse_iso_date(it->get<std::string>());
        }
        refs.push_back(std::move(ref));
    }
    return refs;
}

}  // namespace

Date parse_iso_date(std::string_view text) {
    int y = 0;
    unsigned m = 0, d = 0;
    const std::string head(text.substr(0, 10));
    char tail = 0;
    if (text.size() < 10 || std::sscanf(head.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3 ||
        head[4] != '-' || head[7] != '-')
        throw ValidationError("not an ISO-8601 date: '" + std::string(text) + "'");
    if (text.size() > 10 && text[10] != 'T' && text[10] != ' ')
        throw ValidationError("not an ISO-8601 date: '" + std::string(text) + "'");
    const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!date.ok()) throw ValidationError("invalid calendar date: '" + std::string(text) + "'");
    return date;
}

std::string format_iso_date(const Date& date) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                  static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
    return buf;
}

std::string DemographicKey::str() const { return gender + "|" + group + "|" + age_band; }

DemographicSchema DemographicSchema::defaults() {
    return DemographicSchema{
        {"female", "male", "nonbinary"},
        {"asian", "black", "indian", "white", "hispanic", "middle_eastern", "africa", "americas",
         "asia", "europe", "oceania"},
        {"young", "adult", "senior", "unknown"},
    };
}

DemographicSchema DemographicSchema::load(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw ValidationError("cannot open schema " + json_path.string());
    try {
        const json j = json::parse(in);
        DemographicSchema schema{lowered(j.at("gender")), lowered(j.at("group")), lowered(j.at("age_band"))};
        if (schema.genders.empty() || schema.groups.empty() || schema.age_bands.empty())
            throw ValidationError("schema attributes must be non-empty");
        return schema;
    } catch (const json::exception& e) {
        throw ValidationError("bad schema " + json_path.string() + ": " + e.what());
    }
}

bool DemographicSchema::contains(const DemographicKey& key) const {
    auto has = [](const std::vector<std::string>& v, const std::string& x) {
        return std::find(v.begin(), v.end(), x) != v.end();
    };
    return has(genders, key.gender) && has(groups, key.group) && has(age_bands, key.age_band);
}

std::string collapse_whitespace(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }
    return out;
}

std::string normalize_name(std::string_view name) {
    std::string folded;
    for (std::size_t i = 0; i < name.size();) {
        const char32_t cp = next_code_point(name, i);
        if (cp < 0x80) {
            const auto c = static_cast<unsigned char>(cp);
            if (std::ispunct(c))
                folded.push_back(' ');
            else
                folded.push_back(static_cast<char>(std::tolower(c)));
        } else if (cp >= 0xC0 && cp <= 0xFF) {
            const char* f = kLatin1Fold[cp - 0xC0];
            if (*f)
                folded += f;
            else
                append_utf8(folded, cp);
        } else if (cp >= 0x100 && cp <= 0x17F) {
            for (const auto& r : kLatinExtAFold)
                if (cp >= r.first && cp <= r.last) {
                    folded += r.ascii;
                    break;
                }
        } else if (cp == 0xA0) {
            folded.push_back(' ');
        } else if (!is_combining_mark(cp)) {
            append_utf8(folded, cp);
        }
    }
    return collapse_whitespace(folded);
}

std::vector<NameEntry> parse_name_list(std::istream& in, const DemographicSchema& schema) {
    const auto rows = csv::read(in);
    std::vector<NameEntry> entries;
    if (rows.empty()) return entries;

    std::vector<std::string> header;
    for (const auto& h : rows.front().fields) header.push_back(trim(h));
    if (header != kNameListHeader)
        throw ParseError("expected header 'name,gender,group,age_band,country'", rows.front().line);

    std::map<std::string, std::size_t> seen;  // normalized name -> line
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.fields.size() != kNameListHeader.size())
            throw ParseError("expected 5 fields, got " + std::to_string(row.fields.size()), row.line);
        NameEntry e;
        e.name = collapse_whitespace(row.fields[0]);
        if (e.name.empty()) throw ParseError("empty name", row.line);
        e.demographic = {ascii_lower(trim(row.fields[1])), ascii_lower(trim(row.fields[2])),
                         ascii_lower(trim(row.fields[3]))};
        require_in(schema.genders, e.demographic.gender, "gender", row.line);
        require_in(schema.groups, e.demographic.group, "group", row.line);
        require_in(schema.age_bands, e.demographic.age_band, "age_band", row.line);
        if (auto country = collapse_whitespace(row.fields[4]); !country.empty()) e.country = country;

        const auto key = normalize_name(e.name);
        if (auto [it, inserted] = seen.emplace(key, row.line); !inserted)
            throw ValidationError("duplicate name '" + e.name + "' (line " + std::to_string(row.line) +
                                  ", same as line " + std::to_string(it->second) + ")");
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<NameEntry> load_name_list(const std::filesystem::path& path, const DemographicSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open name list " + path.string());
    return parse_name_list(in, schema);
}

Query build_query(const NameEntry& entry, std::string query_id, std::size_t entry_index) {
    std::string q = collapse_whitespace(entry.name);
    if (entry.country) {
        const auto country = collapse_whitespace(*entry.country);
        if (!country.empty()) q += " " + country;
    }
    return Query{std::move(query_id), std::move(q), entry_index};
}

std::vector<Query> build_queries(std::span<const NameEntry> entries) {
    std::vector<Query> out;
    out.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "q%04zu", i + 1);
        out.push_back(build_query(entries[i], id, i));
    }
    return out;
}

bool FetchWindow::contains(const Date& d) const {
    using namespace std::chrono;
    year_month_day start = reference_date - std::chrono::months(months);
    if (!start.ok()) start = start.year() / start.month() / last;
    return sys_days(d) >= sys_days(start) && sys_days(d) <= sys_days(reference_date);
}

ManifestProvider::ManifestProvider(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw ValidationError("cannot open provider manifest " + manifest.string());
    std::stringstream buf;
    buf << in.rdbuf();
    *this = from_json_text(buf.str());
}

ManifestProvider ManifestProvider::from_json_text(std::string_view text) {
    ManifestProvider p;
    try {
        const json j = json::parse(text);
        if (!j.is_object()) throw ValidationError("provider manifest must be a JSON object");
        for (auto it = j.begin(); it != j.end(); ++it)
            p.entries_.emplace_back(it.key(), parse_ref_list(it.value(), it.key()));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad provider manifest: ") + e.what());
    }
    std::sort(p.entries_.begin(), p.entries_.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return p;
}

std::vector<ProviderRef> ManifestProvider::fetch(const std::string& query_string, std::size_t max_results,
                                                 const FetchWindow&) {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), query_string,
                               [](const auto& e, const std::string& q) { return e.first < q; });
    if (it == entries_.end() || it->first != query_string) return {};
    const auto& refs = it->second;
    return {refs.begin(), refs.begin() + static_cast<std::ptrdiff_t>(std::min(max_results, refs.size()))};
}

std::vector<ImageRef> fetch_image_refs(const Query& query, ImageProvider& provider, const FetchOptions& options) {
    if (options.window_months < 1) throw ValidationError("window_months must be >= 1");
    const FetchWindow window{options.reference_date, options.window_months};
    std::vector<ImageRef> out;
    for (auto& ref : provider.fetch(query.query_string, options.max_results, window)) {
        const bool keep = ref.published_at ? window.contains(*ref.published_at) : options.keep_undated;
        if (keep) out.push_back(ImageRef{query.query_id, std::move(ref.url), ref.published_at});
    }
    return out;
}

std::vector<std::vector<ImageRef>> fetch_all(std::span<const Query> queries, ImageProvider& provider,
                                             const FetchOptions& options, std::size_t parallelism) {
    std::vector<std::vector<ImageRef>> results(queries.size());
    detail::parallel_for(queries.size(), parallelism, [&](std::size_t i) {
        for (int attempt = 0;; ++attempt) {
            try {
                results[i] = fetch_image_refs(queries[i], provider, options);
                return;
            } catch (const TransportError& e) {
                if (attempt >= options.max_retries) throw;
                spdlog::warn("fetch '{}' failed ({}), retry {}", queries[i].query_string, e.what(), attempt + 1);
            }
        }
    });
    return results;
}

std::vector<std::string> deduplicate(std::span<const EmbeddedItem> items, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("dedup threshold must be in (0,1)");
    if (items.empty()) return {};

    // Work in id order so the result does not depend on input order.
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return items[a].id < items[b].id; });

    const std::size_t dim = items[order[0]].embedding.size();
    std::vector<std::vector<double>> unit(items.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& item = items[order[k]];
        if (item.embedding.size() != dim) throw ValidationError("embedding dimension mismatch for '" + item.id + "'");
        if (k > 0 && item.id == items[order[k - 1]].id) throw ValidationError("duplicate item id '" + item.id + "'");
        double norm = 0.0;
        for (double x : item.embedding) norm += x * x;
        norm = std::sqrt(norm);
        if (!(norm > 0.0)) throw ValidationError("zero-norm embedding for '" + item.id + "'");
        unit[k].resize(dim);
        for (std::size_t d = 0; d < dim; ++d) unit[k][d] = item.embedding[d] / norm;
    }

    const std::size_t n = items.size();
    std::vector<double> sim(n * n, 1.0);
    UnionFind uf(n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) {
            double dot = 0.0;
            for (std::size_t d = 0; d < dim; ++d) dot += unit[a][d] * unit[b][d];
            sim[a * n + b] = sim[b * n + a] = dot;
            if (dot > threshold) uf.unite(a, b);
        }

    const auto label = uf.components();
    const std::size_t groups = *std::max_element(label.begin(), label.end()) + 1;
    std::vector<std::vector<std::size_t>> members(groups);
    for (std::size_t k = 0; k < n; ++k) members[label[k]].push_back(k);

    std::vector<std::string> kept;
    for (const auto& group : members) {
        std::size_t best = group.front();
        double best_cost = INFINITY;
        for (std::size_t k : group) {  // ascending id order, so strict < keeps the smallest id on ties
            double cost = 0.0;
            for (std::size_t other : group) cost += 1.0 - sim[k * n + other];
            if (cost < best_cost - 1e-12) {
                best_cost = cost;
                best = k;
            }
        }
        kept.push_back(items[order[best]].id);
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

}  // namespace fvbench::corpus
