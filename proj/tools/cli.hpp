#pragma once

// Command-line front end: key = value config files, reservoir task presets
// and the solve / reservoir / dual / bench modes.

#include "cbm/dual.hpp"
#include "cbm/rc.hpp"
#include "cbm/sa.hpp"

#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbm::cli {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class FileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum ExitCode : int {
    kOk = 0,
    kUsage = 2,
    kFile = 3,
    kConfig = 4,
    kInput = 5,
    kRuntime = 6,
};

/// "key = value" lines; '#' starts a comment. Keys are unique.
class KeyValues {
public:
    static KeyValues parse(std::string_view text, const std::string& origin);
    static KeyValues load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& origin() const { return origin_; }
    const std::map<std::string, std::string>& values() const { return values_; }

    std::string str(const std::string& key) const;
    std::int64_t integer(const std::string& key) const;
    double real(const std::string& key) const;
    bool boolean(const std::string& key) const;
    std::vector<double> reals(const std::string& key) const;
    std::vector<std::uint64_t> seeds(const std::string& key) const;

    /// Throws ConfigError naming the first key not in `known`.
    void require_known(std::span<const std::string> known) const;

private:
    std::string origin_;
    std::map<std::string, std::string> values_;
};

enum class ReservoirTask { stm, pc, narma10 };

ReservoirTask parse_task(const std::string& name);
std::string task_name(ReservoirTask t);

struct ReservoirTaskConfig {
    ReservoirTask task = ReservoirTask::narma10;
    ReservoirParams params;
    SplitSpec split;
    std::size_t max_delay = 30;
    std::vector<std::uint64_t> seeds{1};
};

/// Tuned per-task defaults; the files under configs/ spell out the same values.
ReservoirTaskConfig task_preset(ReservoirTask task);
/// Overrides fields of `base` from a task config file.
ReservoirTaskConfig apply_task_config(ReservoirTaskConfig base, const KeyValues& kv);

struct ReservoirRunResult {
    ReservoirTask task = ReservoirTask::narma10;
    std::uint64_t seed = 0;
    double score = 0;  ///< NRMSE for NARMA10, capacity otherwise
    double nrmse = 0;
    double baseline_nrmse = 0;
    double lambda = 0;
    std::vector<double> r2;
    MacCounters counters;
    double seconds = 0;
    std::size_t points = 0;  ///< frames driven through the reservoir
};

/// Seeds: reservoir weights derive_seed(seed, 3); inputs and initial state as
/// in narma10_task / metric_memory_capacity.
ReservoirRunResult run_reservoir_task(const ReservoirTaskConfig& cfg, std::uint64_t seed);

/// Sorted median.
double median(std::vector<double> v);

/// Replica threads: CBM_THREADS when set, else the hardware concurrency.
unsigned thread_cap();

/// Entry point; args[0] is the program name. Returns an ExitCode.
int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace cbm::cli
