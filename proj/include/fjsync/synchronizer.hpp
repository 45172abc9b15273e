#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "fjsync/network.hpp"

namespace fjsync {

using JobId = std::uint64_t;

// A branch copy of a forked job.
struct Job {
    JobId id = 0;
    double fork_time = 0.0;
    Branch branch = Branch::a;
};

struct MatchedPair {
    JobId id = 0;
    Branch first_branch = Branch::a;
    double first_arrival = 0.0;
    double second_arrival = 0.0;

    double wait() const noexcept { return second_arrival - first_arrival; }
};

// Raised when the synchronizer sees the same (id, branch) twice.
class ProtocolError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Ideal marked-pair synchronizer: unbounded memory, instantaneous monitor.
///
/// Every arriving copy is looked up by id. If its partner is in memory both
/// leave together; otherwise the copy stays as a first partner.
class Synchronizer {
public:
    std::optional<MatchedPair> step(const Job& job, double now) {
        auto it = memory_.find(job.id);
        if (it == memory_.end()) {
            memory_.emplace(job.id, Pending{job.branch, now});
            return std::nullopt;
        }
        if (it->second.branch == job.branch)
            throw ProtocolError("duplicate arrival of job " + std::to_string(job.id) +
                                " from branch " + to_char(job.branch));
        MatchedPair pair{job.id, it->second.branch, it->second.arrival, now};
        memory_.erase(it);
        return pair;
    }

    std::size_t waiting() const noexcept { return memory_.size(); }
    bool empty() const noexcept { return memory_.empty(); }
    bool holds(JobId id) const { return memory_.contains(id); }

    void reserve(std::size_t n) { memory_.reserve(n); }

private:
    struct Pending {
        Branch branch;
        double arrival;
    };
    std::unordered_map<JobId, Pending> memory_;
};

}  // namespace fjsync
