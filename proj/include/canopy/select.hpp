#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "canopy/cart.hpp"
#include "canopy/data.hpp"
#include "canopy/ensemble.hpp"
#include "canopy/importance.hpp"

namespace canopy {

struct ThresholdResult {
    std::vector<int> kept;      // variables in rank order
    double threshold = 0.0;
    bool fallback = false;      // nothing passed; the top variable was kept
    std::vector<double> fitted; // CART prediction of the sd at each rank
    std::size_t leaves = 0;
};

/// Fits a pruned regression tree of VI sd on VI rank and keeps the variables
/// whose mean VI exceeds the smallest leaf value.
ThresholdResult threshold_step(const ImportanceReport& report, std::uint64_t seed, int folds = 10);

struct CurvePoint {
    std::size_t k = 0;           // number of top-ranked variables
    int added = -1;              // variable entering at this k
    double mean = 0.0;
    double sd = 0.0;
    std::vector<double> values;  // OOB error of each replicate forest
};

struct InterpretationResult {
    std::vector<int> selected;
    std::vector<CurvePoint> curve;  // k = 1..m
    std::size_t argmin = 1;         // k with the lowest mean error
};

struct SelectOptions {
    int workers = 1;
    std::function<void(const std::string& stage, std::size_t done, std::size_t total)> progress;
};

/// Nested forests on the top-k kept variables, k = 1..m; the smallest k whose
/// mean OOB error is at most min + sd(argmin) is selected.
InterpretationResult interpretation_step(const Dataset& ds, const std::vector<int>& kept, const ForestParams& params,
                                         int nrep, std::uint64_t seed, const SelectOptions& options = {});

/// Rule applied to a stored curve: smallest k with mean <= min + sd(argmin).
std::size_t interpretation_choice(std::span<const CurvePoint> curve, std::size_t* argmin = nullptr);

/// (1/(m - m')) * sum_{j=m'}^{m-1} |err(j+1) - err(j)| over 1-based curve
/// values; 0 when m' == m. The sum is exact before the division.
double mean_jump_threshold(std::span<const double> errors, std::size_t m_prime);

struct PathPoint {
    int variable = -1;
    double error = 0.0;   // mean OOB error of the candidate model
    double sd = 0.0;
    bool added = false;
};

struct PredictionResult {
    std::vector<int> selected;
    double threshold = 0.0;
    bool threshold_fallback = false;  // m' == m
    std::vector<PathPoint> path;
};

/// Sequential introduction in rank order: a variable joins when the candidate
/// model's mean OOB error is below the current error minus the threshold.
PredictionResult prediction_step(const Dataset& ds, const std::vector<int>& interpretation,
                                 std::span<const double> curve, const ForestParams& params, int nrep,
                                 std::uint64_t seed, const SelectOptions& options = {});

enum class SelectSteps { threshold, interpretation, full };

std::string to_string(SelectSteps s);
SelectSteps parse_select_steps(const std::string& text);

struct VsurfParams {
    ForestParams forest;
    int nrep_vi = 50;
    int nrep_interp = 25;
    int folds = 10;
    SelectSteps steps = SelectSteps::full;
};

struct SelectionReport {
    std::vector<std::string> names;  // feature names of the dataset
    ImportanceReport importance;
    ThresholdResult threshold;
    InterpretationResult interpretation;
    PredictionResult prediction;
    SelectSteps steps = SelectSteps::full;
    std::uint64_t seed = 0;
    std::uint64_t seed_importance = 0;
    std::uint64_t seed_threshold = 0;
    std::uint64_t seed_interpretation = 0;
    std::uint64_t seed_prediction = 0;
};

SelectionReport vsurf(const Dataset& ds, const VsurfParams& params, std::uint64_t seed,
                      const SelectOptions& options = {});

std::string selection_text(const SelectionReport& r);
/// rank,variable,mean_vi
std::string vi_mean_csv(const SelectionReport& r);
/// rank,variable,sd_vi,fitted_sd,threshold
std::string vi_sd_csv(const SelectionReport& r);
/// k,variable,mean_oob,sd_oob
std::string interpretation_csv(const SelectionReport& r);
/// step,variable,mean_oob,sd_oob,added
std::string prediction_csv(const SelectionReport& r);

}  // namespace canopy
