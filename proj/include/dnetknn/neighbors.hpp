#pragma once

#include "dnetknn/dataset.hpp"
#include "dnetknn/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dnetknn {

struct NeighborConfig {
    int k = 5;  // target neighbors per point
    int m = 30; // impostors per foreign class per point

    void validate() const;
};

// Per point, neighbor indices ordered by (squared distance, index).
using NeighborLists = std::vector<std::vector<Index>>;

// One row of the triples table: anchor i, target neighbor l (same class),
// impostor j (different class).
struct Triple {
    std::uint32_t anchor = 0;
    std::uint32_t target = 0;
    std::uint32_t impostor = 0;

    friend bool operator==(const Triple&, const Triple&) = default;
    friend auto operator<=>(const Triple&, const Triple&) = default;
};

using TriplesTable = std::vector<Triple>;

double squared_distance(const Matrix& a, Index i, const Matrix& b, Index j);

// k nearest same-class points of every point in feature space, self excluded,
// ties by smaller index.
NeighborLists target_neighbors(const Dataset& train, int k);

// For every point, the m nearest points of each other class, concatenated in
// ascending class order; m * (c - 1) indices per point.
NeighborLists impostor_neighbors(const Dataset& train, int m);

// Anchor-major; for each anchor its targets and impostors in ascending index
// order, impostors varying fastest.
TriplesTable build_triples(const Dataset& train, const NeighborConfig& cfg);
TriplesTable assemble_triples(const NeighborLists& targets, const NeighborLists& impostors);

// Checks the table invariants against the labels; throws ConsistencyError.
void validate_triples(const TriplesTable& triples, const std::vector<int>& labels);

// Debug dump: rows of three little-endian u64 indices.
void save_triples(const TriplesTable& triples, const std::filesystem::path& path);
TriplesTable load_triples(const std::filesystem::path& path);

} // namespace dnetknn
