#pragma once

// Simultaneous SA and RC execution on one machine partitioned into
// independent clusters by a block-diagonal connectivity mask.

#include "cbm/rc.hpp"
#include "cbm/sa.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace cbm {

enum class ClusterKind { sa, rc };

struct Cluster {
    ClusterKind kind = ClusterKind::sa;
    std::vector<std::uint32_t> neurons;  ///< ascending global indices
};

class Partition {
public:
    /// Throws when clusters overlap, leave [0, n_total) or are empty.
    Partition(std::size_t n_total, std::vector<Cluster> clusters);
    /// Consecutive ranges of the given sizes starting at neuron 0.
    static Partition contiguous(std::size_t n_total,
                                std::span<const std::pair<ClusterKind, std::size_t>> sizes);

    std::size_t n_total() const { return n_total_; }
    const std::vector<Cluster>& clusters() const { return clusters_; }
    /// Cluster index of a neuron, or -1 when unassigned.
    int cluster_of(std::size_t neuron) const { return owner_[neuron]; }

private:
    std::size_t n_total_;
    std::vector<Cluster> clusters_;
    std::vector<int> owner_;
};

/// Block-diagonal couplings: cluster c gets `sources[c]` (sized to the
/// cluster); every cross-cluster pair is zero and disconnected.
WeightMatrix build_masked_weights(const Partition& partition,
                                  std::span<const WeightMatrix* const> sources);

struct SaTask {
    Schedule schedule;
    AnnealOptions options{};
};

struct RcTask {
    const RcConfig* config = nullptr;
    std::vector<std::uint8_t> inputs;
};

using ClusterTask = std::variant<SaTask, RcTask>;

struct DualResult {
    std::vector<SaSolution> sa;        ///< SA clusters in partition order
    std::vector<FeatureMatrix> rc;     ///< RC clusters in partition order
    MacCounters shared;                ///< whole-machine accounting
    std::vector<MacCounters> per_cluster;
    std::uint64_t steps = 0;
};

/// Per-cluster seed; a cluster run standalone with this seed reproduces its
/// dual-run trajectory exactly.
std::uint64_t cluster_seed(std::uint64_t master, std::size_t cluster_index);

/// Steps the whole machine once per global step. Each SA cluster follows its
/// own schedule and each RC cluster its own input frames at fixed temperature;
/// a cluster stops integrating once its task is complete.
DualResult run_dual(const Partition& partition, const WeightMatrix& weights,
                    std::span<const ClusterTask> tasks, std::uint64_t seed);

}  // namespace cbm
