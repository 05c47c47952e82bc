# Copyright 2026 The fvbench Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes label dumps whose confusion matrices match the reference agreement tables.

Rows are dealt into queries of 20 faces in a fixed shuffled order so the
fixtures look like real dumps rather than sorted blocks.
"""

import random

TABLES = {
    "celebrities": ([[1213, 2, 422], [3, 338, 218], [0, 0, 0]], 13),
    "athletes": ([[12311, 117, 16576], [254, 4351, 21076], [1, 0, 26]], 3913),
    "celebrities_2024": ([[874, 3, 65], [9, 145, 81], [0, 0, 0]], 50),
}
LABELS = [1, 0, -1]


def rows_for(cells, excluded):
    rows = []
    for yi, row in enumerate(cells):
        for hi, count in enumerate(row):
            y, yhat = LABELS[yi], LABELS[hi]
            disposition = "included" if yhat != -1 else "excluded:not_single_identity"
            rows += [(y, yhat, disposition)] * count
    rows += [(-1, -1, "precondition:too_few_crawled")] * excluded
    return rows


def main():
    for name, (cells, excluded) in TABLES.items():
        rows = rows_for(cells, excluded)
        random.Random(name).shuffle(rows)
        with open("labels_%s.csv" % name, "w", newline="") as out:
            out.write("query_id,face_id,y,estimated_y,vote_margin,disposition\n")
            for i, (y, yhat, disposition) in enumerate(rows):
                q = "q%05d" % (i // 20)
                margin = 5 if yhat == 1 else (-5 if yhat == 0 else 0)
                out.write("%s,%s-f%02d,%d,%d,%d,%s\n" % (q, q, i % 20, y, yhat, margin, disposition))


if __name__ == "__main__":
    main()
