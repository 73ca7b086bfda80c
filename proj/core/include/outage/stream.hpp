#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "outage/jacobian.hpp"
#include "outage/network.hpp"

namespace outage {

enum class Truth { pre_outage, post_outage };

/// One PMU sample: angles (radians) of the monitored buses, in placement order.
struct StreamRecord {
    long sample_index = 0;
    Eigen::VectorXd angles;
    /// Voltage magnitudes of the same buses when the source reports them.
    std::optional<Eigen::VectorXd> vmag;
    Truth truth = Truth::pre_outage;
};

/// A parsed stream file: column bus ids plus records in file order.
struct StreamTable {
    std::vector<BusId> buses;
    std::vector<StreamRecord> records;
};

/// Ground truth written next to simulated streams.
struct StreamTruth {
    std::optional<long> outage_sample;
    std::optional<int> scenario;
    std::uint64_t seed = 0;
};

/// CSV layout: header `sample,bus_<id>,...[,vm_<id>,...]`, one row per sample,
/// angles in radians. Magnitude columns are written only when every record
/// carries them.
void write_stream_csv(std::ostream& out, const std::vector<BusId>& buses, const std::vector<StreamRecord>& records);
void write_stream_csv(const std::filesystem::path& path, const std::vector<BusId>& buses,
                      const std::vector<StreamRecord>& records);

/// Parses a stream CSV. With `degrees` the angle columns are converted to
/// radians. Throws StreamError on malformed input or an empty stream.
StreamTable read_stream_csv(std::istream& in, bool degrees = false);
StreamTable read_stream_csv(const std::filesystem::path& path, bool degrees = false);

/// {"outage_sample": tau, "scenario": id, "seed": s}; null when absent.
std::string truth_to_json(const StreamTruth& truth);
StreamTruth truth_from_json(const std::string& text);
void write_truth(const std::filesystem::path& path, const StreamTruth& truth);
StreamTruth read_truth(const std::filesystem::path& path);

/// Reorders the table columns to placement order. Throws StreamError when
/// the column set differs from the monitored buses.
std::vector<StreamRecord> align_to_placement(const StreamTable& table, const PmuPlacement& placement);

/// Full-length AngleState for a record. Monitored entries come from the
/// record, the reference angle is 0, other angles are NaN. Magnitudes
/// default to 1.0 p.u. where the record carries none.
AngleState to_angle_state(const StreamRecord& record, const NetworkCase& net, const PmuPlacement& placement);

}  // namespace outage
