#pragma once

// Discrete-event simulation of the two-branch fork-join network: Poisson
// fork, two FIFO M/M/N branches, ideal marked-pair synchronizer.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <deque>
#include <limits>
#include <queue>
#include <span>
#include <stdexcept>
#include <vector>

#include "fjsync/network.hpp"
#include "fjsync/rng.hpp"
#include "fjsync/stats.hpp"
#include "fjsync/synchronizer.hpp"

namespace fjsync::sim {

struct SojournSample {
    JobId id = 0;
    double t_a = 0.0;
    double t_b = 0.0;
    double t_sync = 0.0;  // |t_a - t_b|
    Branch first_branch = Branch::a;
};

// Number of first partners held from `time` until the next point.
struct OccupancyPoint {
    double time = 0.0;
    std::uint64_t count = 0;
};

struct SimOptions {
    double warmup_fraction = 0.0;
    bool record_trace = true;
};

struct SimResult {
    NetworkParams params;
    std::uint64_t n_jobs = 0;
    std::uint64_t seed = 0;
    double warmup_fraction = 0.0;
    std::uint64_t warmup_jobs = 0;

    std::vector<SojournSample> samples;  // post-warmup, in order of emission
    double t_mean_emp = 0.0;
    double t_mean_std_error = std::numeric_limits<double>::quiet_NaN();

    double sync_occupancy_mean = 0.0;
    std::uint64_t max_memory = 0;
    double window_start = 0.0;
    double window_end = 0.0;

    bool trace_recorded = false;
    std::vector<OccupancyPoint> trace;
};

template <class S>
concept JobSampler = requires(S s, Branch br, JobId id) {
    { s.interarrival() } -> std::convertible_to<double>;
    { s.service(br, id) } -> std::convertible_to<double>;
};

// Exponential interarrival and service times, one random stream per source.
class ExponentialSampler {
public:
    ExponentialSampler(const NetworkParams& params, std::uint64_t seed)
        : lambda_(params.lambda),
          mu_{params.a.mu, params.b.mu},
          arrivals_(make_stream(seed, StreamId::arrivals)),
          services_{make_stream(seed, StreamId::branch_a), make_stream(seed, StreamId::branch_b)} {}

    double interarrival() { return arrivals_.exponential(lambda_); }

    double service(Branch br, JobId) {
        const auto i = static_cast<std::size_t>(br);
        return services_[i].exponential(mu_[i]);
    }

private:
    double lambda_;
    double mu_[2];
    RandomStream arrivals_;
    RandomStream services_[2];
};

// Replays fixed times; service times are indexed by job id.
struct ScriptedSampler {
    std::vector<double> interarrivals;
    std::vector<double> service_a;
    std::vector<double> service_b;
    std::size_t next_arrival = 0;

    double interarrival() { return interarrivals.at(next_arrival++); }
    double service(Branch br, JobId id) {
        return br == Branch::a ? service_a.at(id) : service_b.at(id);
    }
};

namespace detail {

enum class EventKind : std::uint8_t { fork, branch_arrival, departure };

struct Event {
    double time;
    std::uint64_t seq;
    EventKind kind;
    Branch branch;
    JobId id;
};

struct Later {
    bool operator()(const Event& x, const Event& y) const noexcept {
        if (x.time != y.time) return x.time > y.time;
        return x.seq > y.seq;
    }
};

struct BranchState {
    ServerCount servers{1};
    std::uint64_t busy = 0;
    std::deque<JobId> queue;

    bool has_free_server() const {
        return servers.is_infinite() || busy < servers.count();
    }
};

}  // namespace detail

/// Runs n_jobs forked pairs through the network with the given sampler.
///
/// One global event queue ordered by (time, sequence number); the two copies
/// of a forked job enter their branches at the same timestamp, a first. Each
/// branch serves FIFO on the earliest free server.
template <JobSampler Sampler>
SimResult simulate(const NetworkParams& params, std::uint64_t n_jobs, Sampler& sampler,
                   const SimOptions& options = {}, std::uint64_t seed = 0) {
    params.validate();
    if (!(options.warmup_fraction >= 0.0 && options.warmup_fraction < 1.0))
        throw std::domain_error("simulate: warmup fraction must lie in [0, 1)");

    using detail::Event;
    using detail::EventKind;

    SimResult result;
    result.params = params;
    result.n_jobs = n_jobs;
    result.seed = seed;
    result.warmup_fraction = options.warmup_fraction;
    result.warmup_jobs =
        static_cast<std::uint64_t>(std::floor(options.warmup_fraction * static_cast<double>(n_jobs)));
    result.trace_recorded = options.record_trace;
    result.samples.reserve(n_jobs - result.warmup_jobs);
    if (options.record_trace) result.trace.reserve(2 * n_jobs);

    std::priority_queue<Event, std::vector<Event>, detail::Later> events;
    std::uint64_t seq = 0;
    auto schedule = [&](double t, EventKind kind, Branch br, JobId id) {
        events.push(Event{t, seq++, kind, br, id});
    };

    detail::BranchState branches[2] = {{params.a.servers, 0, {}}, {params.b.servers, 0, {}}};
    std::vector<double> fork_time(n_jobs);
    Synchronizer sync;
    JobId next_id = 0;

    // Occupancy integral over [window_start, now].
    bool window_open = result.warmup_jobs == 0;
    double last_change = 0.0;
    double area = 0.0;

    auto start_service = [&](Branch br, JobId id, double now) {
        schedule(now + sampler.service(br, id), EventKind::departure, br, id);
    };

    if (n_jobs > 0) schedule(sampler.interarrival(), EventKind::fork, Branch::a, 0);

    while (!events.empty()) {
        const Event ev = events.top();
        events.pop();
        const double now = ev.time;
        auto& branch = branches[static_cast<std::size_t>(ev.branch)];

        switch (ev.kind) {
        case EventKind::fork: {
            const JobId id = next_id++;
            fork_time[id] = now;
            if (!window_open && id == result.warmup_jobs) {
                window_open = true;
                result.window_start = now;
                last_change = now;
            }
            schedule(now, EventKind::branch_arrival, Branch::a, id);
            schedule(now, EventKind::branch_arrival, Branch::b, id);
            if (next_id < n_jobs) schedule(now + sampler.interarrival(), EventKind::fork, Branch::a, 0);
            break;
        }
        case EventKind::branch_arrival:
            if (branch.has_free_server()) {
                ++branch.busy;
                start_service(ev.branch, ev.id, now);
            } else {
                branch.queue.push_back(ev.id);
            }
            break;
        case EventKind::departure: {
            if (window_open) area += static_cast<double>(sync.waiting()) * (now - last_change);
            last_change = now;

            const auto matched = sync.step(Job{ev.id, fork_time[ev.id], ev.branch}, now);
            if (matched && matched->id >= result.warmup_jobs) {
                const double t0 = fork_time[matched->id];
                const double t_first = matched->first_arrival - t0;
                const double t_second = matched->second_arrival - t0;
                SojournSample s;
                s.id = matched->id;
                s.first_branch = matched->first_branch;
                s.t_a = matched->first_branch == Branch::a ? t_first : t_second;
                s.t_b = matched->first_branch == Branch::a ? t_second : t_first;
                s.t_sync = std::abs(s.t_a - s.t_b);
                result.samples.push_back(s);
            }
            result.max_memory = std::max<std::uint64_t>(result.max_memory, sync.waiting());
            if (options.record_trace) result.trace.push_back({now, sync.waiting()});

            if (!branch.queue.empty()) {
                const JobId next = branch.queue.front();
                branch.queue.pop_front();
                start_service(ev.branch, next, now);
            } else {
                --branch.busy;
            }
            break;
        }
        }
    }

    if (!sync.empty()) throw ProtocolError("synchronizer memory not empty after drain");

    result.window_end = last_change;
    const double span = result.window_end - result.window_start;
    result.sync_occupancy_mean = span > 0.0 ? area / span : 0.0;

    // Batch the waits in id order so that batches are contiguous in time.
    std::vector<double> waits(result.samples.size());
    for (const auto& s : result.samples) waits[s.id - result.warmup_jobs] = s.t_sync;
    const auto est = stats::batch_means(waits);
    result.t_mean_emp = est.value;
    result.t_mean_std_error = est.std_error;
    return result;
}

inline SimResult run_simulation(const NetworkParams& params, std::uint64_t n_jobs,
                                std::uint64_t seed, double warmup_fraction = 0.0,
                                bool record_trace = true) {
    params.validate();
    ExponentialSampler sampler(params, seed);
    return simulate(params, n_jobs, sampler, SimOptions{warmup_fraction, record_trace}, seed);
}

inline std::span<const OccupancyPoint> occupancy_trace(const SimResult& result) {
    if (!result.trace_recorded && result.n_jobs > 0)
        throw std::logic_error("occupancy trace was not recorded for this run");
    return result.trace;
}

// Time average of a piecewise-constant trace over [start, end]; the count
// before the first point is taken as zero.
inline double time_average(std::span<const OccupancyPoint> trace, double start, double end) {
    if (trace.empty() || !(end > start)) return 0.0;
    double area = 0.0;
    std::uint64_t level = 0;
    double prev = start;
    for (const auto& pt : trace) {
        const double t = std::clamp(pt.time, start, end);
        area += static_cast<double>(level) * (t - prev);
        prev = t;
        level = pt.count;
    }
    area += static_cast<double>(level) * (end - prev);
    return area / (end - start);
}

inline std::vector<double> waits(const SimResult& result) {
    std::vector<double> w;
    w.reserve(result.samples.size());
    for (const auto& s : result.samples) w.push_back(s.t_sync);
    return w;
}

}  // namespace fjsync::sim
