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

#include "fvbench/types.hpp"

#include <string>

#include "fvbench/errors.hpp"

namespace fvbench {

int to_int(Label label) noexcept { return static_cast<int>(label); }

Label label_from_int(int value) {
    switch (value) {
        case -1: return Label::Unknown;
        case 0: return Label::Other;
        case 1: return Label::Correct;
        default: throw ValidationError("label must be one of -1, 0, 1; got " + std::to_string(value));
    }
}

}  // namespace fvbench
