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

#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace fvbench {

/// Identity label of a face relative to its query's correct identity.
/// Unknown (-1) marks excluded or unidentifiable faces.
enum class Label : std::int8_t { Unknown = -1, Other = 0, Correct = 1 };

int to_int(Label label) noexcept;
Label label_from_int(int value);  // throws ValidationError outside {-1,0,1}

using Labels = std::vector<Label>;

/// Index into a FaceTable. Pairs always refer to faces by index.
using FaceIndex = std::uint32_t;

/// One detected face after cross-service unification.
struct FaceRecord {
    std::string face_id;
    std::string query_id;
    std::string group;  // demographic key of the query
    std::string image_id;
};

using FaceTable = std::vector<FaceRecord>;

/// Unordered face pair in canonical order (first < second).
struct FacePair {
    FaceIndex first = 0;
    FaceIndex second = 0;

    static FacePair canonical(FaceIndex a, FaceIndex b) noexcept {
        return a < b ? FacePair{a, b} : FacePair{b, a};
    }

    auto operator<=>(const FacePair&) const = default;
};

enum class PairKind : std::uint8_t { SameQuery, CrossQuery };

}  // namespace fvbench
