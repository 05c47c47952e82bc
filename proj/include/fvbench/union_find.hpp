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

#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

namespace fvbench {

// Disjoint sets with path halving and union by size.
class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    // Returns false if a and b were already in one set.
    bool unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        if (size_[a] < size_[b]) std::swap(a, b);
        parent_[b] = a;
        size_[a] += size_[b];
        return true;
    }

    std::size_t size() const noexcept { return parent_.size(); }

    // Component label per element; labels are dense and numbered in order of
    // each component's smallest element.
    std::vector<std::size_t> components() {
        std::vector<std::size_t> label(parent_.size(), static_cast<std::size_t>(-1));
        std::vector<std::size_t> root_label(parent_.size(), static_cast<std::size_t>(-1));
        std::size_t next = 0;
        for (std::size_t i = 0; i < parent_.size(); ++i) {
            const std::size_t r = find(i);
            if (root_label[r] == static_cast<std::size_t>(-1)) root_label[r] = next++;
            label[i] = root_label[r];
        }
        return label;
    }

private:
    std::vector<std::size_t> parent_;
    std::vector<std::size_t> size_;
};

}  // namespace fvbench
