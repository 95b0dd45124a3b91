#pragma once

#include <vector>

#include "flowcast/autodiff.hpp"
#include "flowcast/calendar.hpp"
#include "flowcast/optim.hpp"
#include "flowcast/series.hpp"

namespace flowcast {

// One mini-batch of rolling windows, values already standardized. Feature
// vectors are present only for time-embedding model variants.
struct WindowBatch {
    Array inputs;   // B x T
    Array targets;  // B x T_p
    std::vector<std::vector<TimeFeatureVector>> input_feats;   // B x T
    std::vector<std::vector<TimeFeatureVector>> target_feats;  // B x T_p

    int batch_size() const { return inputs.rows(); }
    int input_len() const { return inputs.cols(); }
    int horizon() const { return targets.cols(); }
};

inline WindowBatch make_batch(const RollingWindows& windows, std::span<const size_t> ids,
                              const HolidayCalendar* cal) {
    WindowBatch b;
    const int B = static_cast<int>(ids.size());
    const int T = static_cast<int>(windows.input_len());
    const int Tp = static_cast<int>(windows.horizon());
    b.inputs = Array(B, T);
    b.targets = Array(B, Tp);
    if (cal) {
        b.input_feats.resize(static_cast<size_t>(B));
        b.target_feats.resize(static_cast<size_t>(B));
    }
    for (int r = 0; r < B; ++r) {
        Window w = windows.at(ids[static_cast<size_t>(r)]);
        for (int c = 0; c < T; ++c) b.inputs.at(r, c) = w.input[static_cast<size_t>(c)];
        for (int c = 0; c < Tp; ++c) b.targets.at(r, c) = w.target[static_cast<size_t>(c)];
        if (cal) {
            auto& fi = b.input_feats[static_cast<size_t>(r)];
            auto& ft = b.target_feats[static_cast<size_t>(r)];
            fi.reserve(static_cast<size_t>(T));
            ft.reserve(static_cast<size_t>(Tp));
            for (int c = 0; c < T; ++c)
                fi.push_back(extract_time_features(w.input_stamp(static_cast<size_t>(c)), *cal));
            for (int c = 0; c < Tp; ++c)
                ft.push_back(extract_time_features(w.target_stamp(static_cast<size_t>(c)), *cal));
        }
    }
    return b;
}

// Common face of the trainable sequence models.
class NeuralForecaster {
public:
    virtual ~NeuralForecaster() = default;
    // Returns standardized predictions, B x T_p.
    virtual Var forward(Tape& tape, const WindowBatch& batch, bool train, Rng& rng) = 0;
    virtual ParamStore& params() = 0;
    virtual bool wants_time_features() const = 0;
};

}  // namespace flowcast
