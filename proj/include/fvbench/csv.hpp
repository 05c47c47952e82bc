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

// Minimal RFC 4180 reader/writer used by every file format in the project.

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace fvbench::csv {

struct Row {
    std::size_t line = 0;  // 1-based line where the record starts
    std::vector<std::string> fields;
};

/// Parses the whole stream. Quoted fields may contain commas, quotes ("")
/// and newlines. Blank lines are skipped. Throws ParseError.
std::vector<Row> read(std::istream& in);

/// Reads a file and checks that its header equals `expected_header`.
/// Returns the data rows only; each is checked for the header's width.
std::vector<Row> read_file(const std::filesystem::path& path,
                           const std::vector<std::string>& expected_header);

std::string escape(std::string_view field);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);

double parse_double(const std::string& text, std::size_t line);
long long parse_int(const std::string& text, std::size_t line);

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    Writer& row(const std::vector<std::string>& fields);

private:
    std::ostream& out_;
};

}  // namespace fvbench::csv
