#include "dnetknn/neighbors.hpp"

#include "dnetknn/error.hpp"
#include "dnetknn/parallel.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <utility>

namespace dnetknn {

namespace {

using Candidate = std::pair<double, Index>;

std::vector<std::vector<Index>> members_by_class(const Dataset& data) {
    std::vector<std::vector<Index>> members(static_cast<std::size_t>(data.num_classes()));
    for (Index i = 0; i < data.size(); ++i) {
        members[static_cast<std::size_t>(data.label(i))].push_back(i);
    }
    return members;
}

// The `count` smallest (distance, index) pairs among `pool`, skipping `skip`.
std::vector<Index> nearest(const Matrix& x, Index anchor, const std::vector<Index>& pool,
                           std::size_t count, Index skip) {
    std::vector<Candidate> cand;
    cand.reserve(pool.size());
    for (Index j : pool) {
        if (j != skip) {
            cand.emplace_back(squared_distance(x, anchor, x, j), j);
        }
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(count), cand.end());
    std::vector<Index> out(count);
    for (std::size_t r = 0; r < count; ++r) {
        out[r] = cand[r].second;
    }
    return out;
}

void check_index_range(std::size_t n) {
    if (n > std::numeric_limits<std::uint32_t>::max()) {
        throw CapacityError("triples table indices are 32-bit; dataset too large");
    }
}

} // namespace

void NeighborConfig::validate() const {
    if (k < 1) {
        throw ConfigError("k must be at least 1, got " + std::to_string(k));
    }
    if (m < 1) {
        throw ConfigError("m must be at least 1, got " + std::to_string(m));
    }
}

double squared_distance(const Matrix& a, Index i, const Matrix& b, Index j) {
    return (a.row(static_cast<Eigen::Index>(i)) - b.row(static_cast<Eigen::Index>(j))).squaredNorm();
}

NeighborLists target_neighbors(const Dataset& train, int k) {
    if (k < 1) {
        throw ConfigError("k must be at least 1, got " + std::to_string(k));
    }
    const auto members = members_by_class(train);
    for (std::size_t c = 0; c < members.size(); ++c) {
        if (!members[c].empty() && members[c].size() < static_cast<std::size_t>(k) + 1) {
            throw CapacityError("class " + std::to_string(c) + " has " +
                                std::to_string(members[c].size()) + " members; k=" +
                                std::to_string(k) + " target neighbors need at least " +
                                std::to_string(k + 1));
        }
    }
    NeighborLists out(train.size());
    parallel_for(train.size(), [&](std::size_t i) {
        out[i] = nearest(train.features(), i, members[static_cast<std::size_t>(train.label(i))],
                         static_cast<std::size_t>(k), i);
    });
    return out;
}

NeighborLists impostor_neighbors(const Dataset& train, int m) {
    if (m < 1) {
        throw ConfigError("m must be at least 1, got " + std::to_string(m));
    }
    if (train.num_classes() < 2) {
        throw CapacityError("impostors need at least two classes");
    }
    const auto members = members_by_class(train);
    for (std::size_t c = 0; c < members.size(); ++c) {
        if (members[c].size() < static_cast<std::size_t>(m)) {
            throw CapacityError("class " + std::to_string(c) + " has " +
                                std::to_string(members[c].size()) + " members; m=" +
                                std::to_string(m) + " impostors per class need at least " +
                                std::to_string(m));
        }
    }
    NeighborLists out(train.size());
    const Index none = std::numeric_limits<Index>::max();
    parallel_for(train.size(), [&](std::size_t i) {
        auto& list = out[i];
        list.reserve(static_cast<std::size_t>(m) * (members.size() - 1));
        for (std::size_t c = 0; c < members.size(); ++c) {
            if (static_cast<int>(c) == train.label(i)) {
                continue;
            }
            const auto near = nearest(train.features(), i, members[c], static_cast<std::size_t>(m), none);
            list.insert(list.end(), near.begin(), near.end());
        }
    });
    return out;
}

TriplesTable assemble_triples(const NeighborLists& targets, const NeighborLists& impostors) {
    if (targets.size() != impostors.size()) {
        throw ConsistencyError("target and impostor lists cover different point counts");
    }
    check_index_range(targets.size());
    std::size_t rows = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        rows += targets[i].size() * impostors[i].size();
    }
    TriplesTable table;
    table.reserve(rows);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        auto ls = targets[i];
        auto js = impostors[i];
        std::sort(ls.begin(), ls.end());
        std::sort(js.begin(), js.end());
        for (Index l : ls) {
            for (Index j : js) {
                table.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(l),
                                 static_cast<std::uint32_t>(j)});
            }
        }
    }
    return table;
}

TriplesTable build_triples(const Dataset& train, const NeighborConfig& cfg) {
    cfg.validate();
    // Impostors first: a single-class set fails on the missing foreign class.
    auto impostors = impostor_neighbors(train, cfg.m);
    auto targets = target_neighbors(train, cfg.k);
    return assemble_triples(targets, impostors);
}

void validate_triples(const TriplesTable& triples, const std::vector<int>& labels) {
    for (std::size_t r = 0; r < triples.size(); ++r) {
        const Triple& t = triples[r];
        if (t.anchor >= labels.size() || t.target >= labels.size() || t.impostor >= labels.size()) {
            throw ConsistencyError("triple " + std::to_string(r) + " indexes past " +
                                   std::to_string(labels.size()) + " points");
        }
        if (t.anchor == t.target || labels[t.anchor] != labels[t.target]) {
            throw ConsistencyError("triple " + std::to_string(r) + " has an invalid target neighbor");
        }
        if (labels[t.anchor] == labels[t.impostor]) {
            throw ConsistencyError("triple " + std::to_string(r) + " has a same-class impostor");
        }
        if (r > 0 && !(triples[r - 1] < t)) {
            throw ConsistencyError("triple " + std::to_string(r) + " is out of order or duplicated");
        }
    }
}

void save_triples(const TriplesTable& triples, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    auto put = [&](std::uint64_t v) {
        char bytes[8];
        for (int b = 0; b < 8; ++b) {
            bytes[b] = static_cast<char>((v >> (8 * b)) & 0xFF);
        }
        out.write(bytes, 8);
    };
    for (const Triple& t : triples) {
        put(t.anchor);
        put(t.target);
        put(t.impostor);
    }
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

TriplesTable load_triples(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    const std::vector<unsigned char> buf{std::istreambuf_iterator<char>(in),
                                         std::istreambuf_iterator<char>()};
    if (buf.size() % 24 != 0) {
        throw TruncatedError(path.string() + ": size is not a multiple of 24 bytes");
    }
    auto get = [&](std::size_t offset) {
        std::uint64_t v = 0;
        for (int b = 7; b >= 0; --b) {
            v = (v << 8) | buf[offset + static_cast<std::size_t>(b)];
        }
        if (v > std::numeric_limits<std::uint32_t>::max()) {
            throw FormatError("triple index exceeds 32 bits");
        }
        return static_cast<std::uint32_t>(v);
    };
    TriplesTable table(buf.size() / 24);
    for (std::size_t r = 0; r < table.size(); ++r) {
        table[r] = {get(24 * r), get(24 * r + 8), get(24 * r + 16)};
    }
    return table;
}

} // namespace dnetknn
