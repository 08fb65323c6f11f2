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

#pragma once

#include "hmimo/types.hpp"

namespace hmimo
{
    enum class Side
    {
        tx,
        rx
    };

    // Patch grids of the two parallel surfaces. Patches are numbered row by row,
    // starting at 1; the receiver surface lies in the xy plane.
    struct SurfaceGeometry
    {
        int rx_rows = 0;
        int rx_cols = 0;
        int tx_rows = 0;
        int tx_cols = 0;
        double rx_dx = 0.0;
        double rx_dy = 0.0;
        double tx_dx = 0.0;
        double tx_dy = 0.0;

        int M() const { return rx_rows * rx_cols; }
        int N() const { return tx_rows * tx_cols; }

        // Extent between the first and the last patch center along each axis.
        double rx_span_x() const { return (rx_cols - 1) * rx_dx; }
        double rx_span_y() const { return (rx_rows - 1) * rx_dy; }
        double tx_span_x() const { return (tx_cols - 1) * tx_dx; }
        double tx_span_y() const { return (tx_rows - 1) * tx_dy; }

        double rx_area() const { return rx_dx * rx_dy; }
        double tx_area() const { return tx_dx * tx_dy; }

        // Throws ConfigError when any dimension is not strictly positive.
        void validate() const;
    };

    // Offset of transmit patch n from the first transmit patch.
    struct PatchOffset
    {
        double dx = 0.0;
        double dy = 0.0;
    };

    // 1-based (column, row) of a row-major patch index.
    struct GridCell
    {
        int col = 1;
        int row = 1;
    };

    GridCell grid_cell(int index, int cols);

    Position patch_center(int index, Side side, const SurfaceGeometry &geom, const Position &origin);

    // Relative coordinates (x_n^t - x_m^r, y_n^t - y_m^r, z_1^t) of a patch pair.
    // p1 is the center of the first transmit patch.
    Position relative_coords(int m, int n, const SurfaceGeometry &geom, const Position &p1);

    PatchOffset patch_offset(int n, const SurfaceGeometry &geom);

} // namespace hmimo
