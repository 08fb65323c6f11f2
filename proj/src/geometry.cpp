// SPDX-License-Identifier: Apache-2.0
//
// hmimo: near-field holographic MIMO channel simulation and estimation
// Copyright (C) 2026 The hmimo authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include "hmimo/geometry.hpp"

#include <string>

namespace hmimo
{
    void SurfaceGeometry::validate() const
    {
        if (rx_rows <= 0 || rx_cols <= 0 || tx_rows <= 0 || tx_cols <= 0)
            throw ConfigError("surface geometry: row and column counts must be positive");
        if (!(rx_dx > 0.0) || !(rx_dy > 0.0) || !(tx_dx > 0.0) || !(tx_dy > 0.0))
            throw ConfigError("surface geometry: patch sizes must be positive");
    }

    GridCell grid_cell(int index, int cols)
    {
        return {(index - 1) % cols + 1, (index - 1) / cols + 1};
    }

    static void check_index(int index, int count, const char *what)
    {
        if (index < 1 || index > count)
            throw RangeError(std::string(what) + " index " + std::to_string(index) + " outside [1, " +
                             std::to_string(count) + "]");
    }

    Position patch_center(int index, Side side, const SurfaceGeometry &geom, const Position &origin)
    {
        const bool tx = side == Side::tx;
        check_index(index, tx ? geom.N() : geom.M(), tx ? "transmit patch" : "receive patch");
        const GridCell cell = grid_cell(index, tx ? geom.tx_cols : geom.rx_cols);
        const double dx = tx ? geom.tx_dx : geom.rx_dx;
        const double dy = tx ? geom.tx_dy : geom.rx_dy;
        return {origin.x + (cell.col - 1) * dx, origin.y + (cell.row - 1) * dy, origin.z};
    }

    Position relative_coords(int m, int n, const SurfaceGeometry &geom, const Position &p1)
    {
        const Position rx = patch_center(m, Side::rx, geom, {});
        const Position tx = patch_center(n, Side::tx, geom, p1);
        return {tx.x - rx.x, tx.y - rx.y, p1.z};
    }

    PatchOffset patch_offset(int n, const SurfaceGeometry &geom)
    {
        check_index(n, geom.N(), "transmit patch");
        const GridCell cell = grid_cell(n, geom.tx_cols);
        return {(cell.col - 1) * geom.tx_dx, (cell.row - 1) * geom.tx_dy};
    }

} // namespace hmimo
