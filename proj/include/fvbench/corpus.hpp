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

// Name lists, queries, image references and near-duplicate removal.
//
// Images are only ever referenced by URL or path. Nothing in this module
// downloads or stores pixels; downstream stages persist ids, boxes, scores
// and labels only.

#pragma once

#include <chrono>
#include <compare>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fvbench::corpus {

using Date = std::chrono::year_month_day;

/// Parses "YYYY-MM-DD", optionally followed by a "T..." time part which is
/// ignored. Throws ValidationError.
Date parse_iso_date(std::string_view text);
std::string format_iso_date(const Date& date);

struct DemographicKey {
    std::string gender;
    std::string group;
    std::string age_band;

    /// "gender|group|age_band"; used as the demographic stratum everywhere.
    std::string str() const;

    auto operator<=>(const DemographicKey&) const = default;
};

/// The finite set of admissible values per demographic attribute.
struct DemographicSchema {
    std::vector<std::string> genders;
    std::vector<std::string> groups;
    std::vector<std::string> age_bands;

    static DemographicSchema defaults();
    static DemographicSchema load(const std::filesystem::path& json_path);

    bool contains(const DemographicKey& key) const;
};

struct NameEntry {
    std::string name;
    DemographicKey demographic;
    std::optional<std::string> country;
};

/// Single spaces between words, no leading or trailing whitespace.
std::string collapse_whitespace(std::string_view text);

/// Duplicate-detection key: diacritics stripped, lowercased, punctuation
/// turned into spaces, whitespace collapsed. "A. Smith" and "a smith" share
/// a key.
std::string normalize_name(std::string_view name);

/// Reads the `name,gender,group,age_band,country` CSV. Throws ParseError for
/// malformed rows and ValidationError for duplicates or unknown values.
std::vector<NameEntry> load_name_list(const std::filesystem::path& path,
                                      const DemographicSchema& schema = DemographicSchema::defaults());
std::vector<NameEntry> parse_name_list(std::istream& in,
                                       const DemographicSchema& schema = DemographicSchema::defaults());

struct Query {
    std::string query_id;
    std::string query_string;
    std::size_t entry_index = 0;  // position in the name list
};

/// "<name>" or "<name> <country>", whitespace collapsed.
Query build_query(const NameEntry& entry, std::string query_id, std::size_t entry_index = 0);

/// One query per entry with ids q0001, q0002, ... in list order.
std::vector<Query> build_queries(std::span<const NameEntry> entries);

struct ImageRef {
    std::string query_id;
    std::string url;
    std::optional<Date> published_at;
};

/// What a provider hands back for one search.
struct ProviderRef {
    std::string url;
    std::optional<Date> published_at;
};

struct FetchWindow {
    Date reference_date;
    int months = 12;

    bool contains(const Date& d) const;
};

/// Image search backend. Implementations must be safe to call from several
/// threads at once. Transport failures are reported as TransportError.
class ImageProvider {
public:
    virtual ~ImageProvider() = default;
    virtual std::vector<ProviderRef> fetch(const std::string& query_string, std::size_t max_results,
                                           const FetchWindow& window) = 0;
};

/// Reference provider backed by a JSON manifest:
/// { "<query string>": [ {"url": "...", "published_at": "2024-05-01"}, ... ] }
class ManifestProvider final : public ImageProvider {
public:
    explicit ManifestProvider(const std::filesystem::path& manifest);
    static ManifestProvider from_json_text(std::string_view text);

    std::vector<ProviderRef> fetch(const std::string& query_string, std::size_t max_results,
                                   const FetchWindow& window) override;

private:
    ManifestProvider() = default;
    std::vector<std::pair<std::string, std::vector<ProviderRef>>> entries_;  // sorted by query
};

struct FetchOptions {
    Date reference_date{std::chrono::year{2024}, std::chrono::month{1}, std::chrono::day{1}};
    int window_months = 12;
    bool keep_undated = true;
    std::size_t max_results = 100;
    int max_retries = 3;
};

/// Keeps refs published inside the window (and undated refs when
/// keep_undated is set), in provider order. Zero results is not an error.
std::vector<ImageRef> fetch_image_refs(const Query& query, ImageProvider& provider,
                                       const FetchOptions& options);

/// fetch_image_refs over all queries with at most `parallelism` concurrent
/// provider calls. TransportError is retried up to options.max_retries times.
/// Result order follows `queries`.
std::vector<std::vector<ImageRef>> fetch_all(std::span<const Query> queries, ImageProvider& provider,
                                             const FetchOptions& options, std::size_t parallelism);

struct EmbeddedItem {
    std::string id;
    std::vector<double> embedding;
};

/// Groups items by the transitive closure of cosine similarity > threshold
/// and keeps the medoid of each group (smallest summed cosine distance to
/// the other members, ties to the smallest id). Returns kept ids sorted.
std::vector<std::string> deduplicate(std::span<const EmbeddedItem> items, double threshold = 0.9);

}  // namespace fvbench::corpus
