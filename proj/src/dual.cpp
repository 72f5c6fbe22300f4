#include "cbm/dual.hpp"

#include "cbm/rng.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <stdexcept>

namespace cbm {

Partition::Partition(std::size_t n_total, std::vector<Cluster> clusters)
    : n_total_(n_total), clusters_(std::move(clusters)), owner_(n_total, -1) {
    for (std::size_t c = 0; c < clusters_.size(); ++c) {
        auto& nv = clusters_[c].neurons;
        if (nv.empty()) throw std::invalid_argument("cluster " + std::to_string(c) + " is empty");
        std::sort(nv.begin(), nv.end());
        for (const auto i : nv) {
            if (i >= n_total)
                throw std::invalid_argument("cluster " + std::to_string(c) + " neuron " +
                                            std::to_string(i) + " outside the machine");
            if (owner_[i] != -1)
                throw std::invalid_argument("neuron " + std::to_string(i) +
                                            " belongs to more than one cluster");
            owner_[i] = static_cast<int>(c);
        }
    }
}

Partition Partition::contiguous(std::size_t n_total,
                                std::span<const std::pair<ClusterKind, std::size_t>> sizes) {
    std::vector<Cluster> cl;
    std::uint32_t next = 0;
    for (const auto& [kind, size] : sizes) {
        Cluster c{kind, std::vector<std::uint32_t>(size)};
        std::iota(c.neurons.begin(), c.neurons.end(), next);
        next += static_cast<std::uint32_t>(size);
        cl.push_back(std::move(c));
    }
    return Partition(n_total, std::move(cl));
}

WeightMatrix build_masked_weights(const Partition& partition,
                                  std::span<const WeightMatrix* const> sources) {
    const auto& cl = partition.clusters();
    if (sources.size() != cl.size())
        throw std::invalid_argument("need one weight source per cluster");
    int scale = 0;
    for (std::size_t c = 0; c < cl.size(); ++c) {
        if (!sources[c] || sources[c]->size() != cl[c].neurons.size())
            throw std::invalid_argument("cluster " + std::to_string(c) + " has " +
                                        std::to_string(cl[c].neurons.size()) +
                                        " neurons but its weight source does not match");
        scale = std::gcd(scale, sources[c]->scale());
    }
    if (scale == 0) scale = 1;
    // Width large enough for every source's couplings at the common scale.
    int bits = 2;
    for (std::size_t c = 0; c < cl.size(); ++c) {
        const std::int64_t max_code =
            static_cast<std::int64_t>(sources[c]->max_code()) * (sources[c]->scale() / scale);
        while (((std::int64_t{1} << (bits - 1)) - 1) < max_code) ++bits;
        bits = std::max(bits, sources[c]->weight_bits());
    }
    const std::size_t n = partition.n_total();
    WeightMatrix w(n, bits, scale);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const int ci = partition.cluster_of(i);
            if (ci < 0 || ci != partition.cluster_of(j)) w.disconnect(i, j);
        }
    for (std::size_t c = 0; c < cl.size(); ++c) {
        const auto& nv = cl[c].neurons;
        const WeightMatrix& src = *sources[c];
        for (std::size_t a = 0; a < nv.size(); ++a) {
            w.set_bias(nv[a], src.bias(a));
            for (std::size_t b = a + 1; b < nv.size(); ++b) {
                if (!src.connected(a, b)) {
                    w.disconnect(nv[a], nv[b]);
                    continue;
                }
                w.set_code(nv[a], nv[b], src.weight(a, b) / scale);
            }
        }
    }
    return w;
}

std::uint64_t cluster_seed(std::uint64_t master, std::size_t cluster_index) {
    return derive_seed(master, 0x1000 + cluster_index);
}

namespace {

struct SaRun {
    const SaTask* task;
    DynamicsConfig dynamics;
    SolutionTracker tracker;
    std::size_t segment = 0;
    std::uint64_t in_segment = 0;
    std::uint64_t steps_done = 0;

    bool active() const { return steps_done < task->schedule.total_steps(); }
    const Temperature& temp() {
        const auto& segs = task->schedule.segments();
        while (in_segment == segs[segment].steps) {
            ++segment;
            in_segment = 0;
        }
        return segs[segment].temp;
    }
};

struct RcRun {
    const RcTask* task;
    FrameAccumulator acc;
    std::vector<std::int32_t> drive;  // global-sized input weights
    std::size_t frame = 0;
    bool in_frame = false;
    FeatureMatrix features;

    bool active() const { return frame < task->inputs.size(); }
};

void gather(const CbmState& st, std::span<const std::uint32_t> idx, std::vector<std::uint8_t>& out) {
    out.resize(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) out[k] = st.s[idx[k]];
}

}  // namespace

DualResult run_dual(const Partition& partition, const WeightMatrix& weights,
                    std::span<const ClusterTask> tasks, std::uint64_t seed) {
    const auto& cl = partition.clusters();
    if (tasks.size() != cl.size()) throw std::invalid_argument("need one task per cluster");
    if (weights.size() != partition.n_total())
        throw std::invalid_argument("weights do not match the partition size");
    const std::size_t n = partition.n_total();

    CbmState st;
    st.x.assign(n, 0);
    st.s.assign(n, 0);
    st.z.assign(n, 0);
    std::vector<std::optional<SaRun>> sa(cl.size());
    std::vector<std::optional<RcRun>> rc(cl.size());
    std::vector<const DynamicsConfig*> dyn(cl.size());

    for (std::size_t c = 0; c < cl.size(); ++c) {
        const auto& nv = cl[c].neurons;
        if (const auto* t = std::get_if<SaTask>(&tasks[c])) {
            if (cl[c].kind != ClusterKind::sa) throw std::invalid_argument("SA task on a non-SA cluster");
            if (t->options.dynamics.sequential)
                throw std::invalid_argument("dual runs step clusters synchronously");
            sa[c].emplace(SaRun{t, t->options.dynamics, SolutionTracker(cluster_seed(seed, c), t->options.sample_every)});
            dyn[c] = &sa[c]->dynamics;
        } else {
            const auto& rt = std::get<RcTask>(tasks[c]);
            if (cl[c].kind != ClusterKind::rc) throw std::invalid_argument("RC task on a non-RC cluster");
            if (!rt.config) throw std::invalid_argument("RC task without a reservoir config");
            rt.config->validate();
            if (rt.config->reservoir_size != nv.size())
                throw std::invalid_argument("reservoir size does not match its cluster");
            RcRun run{&rt, FrameAccumulator(*rt.config), std::vector<std::int32_t>(n, 0), 0, false, {}};
            for (std::size_t k = 0; k < nv.size(); ++k) run.drive[nv[k]] = rt.config->input_weights[k];
            const std::size_t rows =
                rt.inputs.size() > rt.config->washout_frames ? rt.inputs.size() - rt.config->washout_frames : 0;
            run.features.values.resize(static_cast<Eigen::Index>(rows),
                                       static_cast<Eigen::Index>(nv.size() + 1));
            rc[c].emplace(std::move(run));
            dyn[c] = &rt.config->dynamics;
        }
        const CbmState local = init_state(nv.size(), cluster_seed(seed, c), *dyn[c]);
        for (std::size_t k = 0; k < nv.size(); ++k) {
            st.x[nv[k]] = local.x[k];
            st.s[nv[k]] = local.s[k];
        }
    }
    recompute_fields(st, weights);

    DualResult out;
    out.per_cluster.resize(cl.size());
    std::vector<std::uint8_t> local_s;
    for (std::size_t c = 0; c < cl.size(); ++c) {
        if (!sa[c]) continue;
        gather(st, cl[c].neurons, local_s);
        // Cross-cluster couplings are zero, so the global matrix restricted to
        // the cluster gives the standalone energy.
        std::int64_t e = 0;
        const auto& nv = cl[c].neurons;
        for (std::size_t a = 0; a < nv.size(); ++a) {
            if (!local_s[a]) continue;
            e -= weights.bias(nv[a]);
            for (std::size_t b = a + 1; b < nv.size(); ++b)
                if (local_s[b]) e -= weights.weight(nv[a], nv[b]);
        }
        sa[c]->tracker.start(e, local_s);
    }

    std::vector<FlipEvent> flips;
    std::vector<std::vector<FlipEvent>> local_flips(cl.size());
    std::vector<std::int64_t> de(cl.size());
    auto any_active = [&] {
        for (std::size_t c = 0; c < cl.size(); ++c)
            if ((sa[c] && sa[c]->active()) || (rc[c] && rc[c]->active())) return true;
        return false;
    };

    while (any_active()) {
        flips.clear();
        for (std::size_t c = 0; c < cl.size(); ++c) {
            const auto& nv = cl[c].neurons;
            if (sa[c] && sa[c]->active()) {
                integrate(st, nv, sa[c]->temp(), *dyn[c], {}, flips);
            } else if (rc[c] && rc[c]->active()) {
                RcRun& r = *rc[c];
                if (!r.in_frame) {
                    gather(st, nv, local_s);
                    r.acc.begin_frame(r.task->inputs[r.frame], st.step, local_s);
                    r.in_frame = true;
                }
                const std::span<const std::int32_t> drive =
                    r.acc.pulse_on() ? std::span<const std::int32_t>(r.drive) : std::span<const std::int32_t>{};
                integrate(st, nv, r.task->config->temp, *dyn[c], drive, flips);
            }
        }
        std::sort(flips.begin(), flips.end(),
                  [](const FlipEvent& a, const FlipEvent& b) { return a.neuron < b.neuron; });
        commit_flips(st, flips);
        ++st.step;

        for (auto& lf : local_flips) lf.clear();
        std::fill(de.begin(), de.end(), 0);
        for (const auto& f : flips) {
            const auto c = static_cast<std::size_t>(partition.cluster_of(f.neuron));
            de[c] += propagate_flip(st, weights, f);
            const auto& nv = cl[c].neurons;
            const auto local = static_cast<std::uint32_t>(
                std::lower_bound(nv.begin(), nv.end(), f.neuron) - nv.begin());
            local_flips[c].push_back({local, f.new_s, f.step});
        }
        account_step(out.shared, n, flips.size(), static_cast<std::uint64_t>(flips.size()) * n);

        for (std::size_t c = 0; c < cl.size(); ++c) {
            const auto& nv = cl[c].neurons;
            if (sa[c] && sa[c]->active()) {
                SaRun& r = *sa[c];
                account_step(out.per_cluster[c], nv.size(), local_flips[c].size(),
                             static_cast<std::uint64_t>(local_flips[c].size()) * nv.size());
                ++r.in_segment;
                ++r.steps_done;
                gather(st, nv, local_s);
                r.tracker.observe(r.steps_done, local_flips[c].size(), de[c], local_s);
            } else if (rc[c] && rc[c]->active()) {
                RcRun& r = *rc[c];
                account_step(out.per_cluster[c], nv.size(), local_flips[c].size(),
                             static_cast<std::uint64_t>(local_flips[c].size()) * nv.size());
                r.acc.after_step(local_flips[c], st.step);
                if (r.acc.frame_done()) {
                    gather(st, nv, local_s);
                    const auto f = r.acc.end_frame(local_s);
                    const std::size_t washout = r.task->config->washout_frames;
                    if (r.frame >= washout) {
                        const auto row = static_cast<Eigen::Index>(r.frame - washout);
                        for (std::size_t k = 0; k < nv.size(); ++k)
                            r.features.values(row, static_cast<Eigen::Index>(k)) = f[k];
                        r.features.values(row, static_cast<Eigen::Index>(nv.size())) = 1.0;
                    }
                    ++r.frame;
                    r.in_frame = false;
                }
            }
        }
    }

    out.steps = st.step;
    for (std::size_t c = 0; c < cl.size(); ++c) {
        if (sa[c]) out.sa.push_back(sa[c]->tracker.solution(out.per_cluster[c]));
        if (rc[c]) {
            MacCounters mc = out.per_cluster[c];
            mc.input_macs = rc[c]->acc.io_counters().input_macs;
            mc.output_macs = rc[c]->acc.io_counters().output_macs;
            out.per_cluster[c] = mc;
            rc[c]->features.counters = mc;
            out.rc.push_back(std::move(rc[c]->features));
        }
    }
    return out;
}

}  // namespace cbm
