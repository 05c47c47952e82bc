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

// Random block-diagonal confidence matrices with known membership.

#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace fvbench::oracle {

struct BlockMatrix {
    std::size_t n = 0;
    std::vector<double> values;   // row major, symmetric, unit diagonal
    std::vector<int> block;       // block id per row, -1 for singletons
    std::vector<std::size_t> sizes;
};

/// Blocks of sizes drawn from [0, max_block] plus singleton distractors,
/// rows shuffled. Noise: in-block entries ~U(in_lo, 1), off-block ~U(0, off_hi);
/// in_lo = 1 and off_hi = 0 give a noiseless 0/1 matrix.
inline BlockMatrix random_block_matrix(std::mt19937_64& rng, std::size_t max_block, double in_lo, double off_hi) {
    std::uniform_int_distribution<std::size_t> size_dist(0, max_block);
    std::uniform_int_distribution<int> count_dist(1, 3);
    std::uniform_int_distribution<std::size_t> singles_dist(0, 10);
    BlockMatrix m;
    std::vector<int> membership;
    const int blocks = count_dist(rng);
    for (int b = 0; b < blocks; ++b) {
        const std::size_t s = size_dist(rng);
        m.sizes.push_back(s);
        membership.insert(membership.end(), s, b);
    }
    membership.insert(membership.end(), singles_dist(rng), -1);
    while (membership.size() < 2) membership.push_back(-1);
    std::shuffle(membership.begin(), membership.end(), rng);

    m.n = membership.size();
    m.block = membership;
    m.values.assign(m.n * m.n, 0.0);
    std::uniform_real_distribution<double> in(in_lo, 1.0), off(0.0, off_hi);
    for (std::size_t i = 0; i < m.n; ++i) {
        m.values[i * m.n + i] = 1.0;
        for (std::size_t j = i + 1; j < m.n; ++j) {
            const bool same = m.block[i] >= 0 && m.block[i] == m.block[j];
            double v = same ? (in_lo >= 1.0 ? 1.0 : in(rng)) : (off_hi <= 0.0 ? 0.0 : off(rng));
            m.values[i * m.n + j] = m.values[j * m.n + i] = v;
        }
    }
    return m;
}

}  // namespace fvbench::oracle
