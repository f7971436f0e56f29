#pragma once

#include "beamloc/sim.hpp"

namespace beamloc::doa {

struct CovarianceMatrix {
    MatrixXcd data;
    int snapshots = 0;

    /// Hermitian within 1e-10 (relative) and PSD up to -1e-8 * trace.
    void validate() const;
};

CovarianceMatrix sample_covariance(const MatrixXcd& snapshots);
CovarianceMatrix sample_covariance(const sim::SnapshotMatrix& x);

/// Model order from successive singular-value ratios of the data matrix:
/// index of the largest ratio if it exceeds the threshold, otherwise 0.
int estimate_source_count(const MatrixXcd& snapshots, double threshold = 3.0);

struct GridSpec {
    double az_step_deg = 1.0;
    double el_step_deg = 1.0;
    double el_max_deg = 89.0;  // elevation grid stays below pi/2
};

struct Pseudospectrum {
    std::vector<double> az_deg;
    std::vector<double> el_deg;
    MatrixXd values;  // rows = elevations, cols = azimuths
};

struct DoaEstimate {
    double azimuth = 0.0;    // rad
    double elevation = 0.0;  // rad
    double value = 0.0;      // pseudospectrum height at the peak
    std::string device;
    double t = 0.0;
};

/// Classical MUSIC over an azimuth/elevation grid. `d_over_lambda` converts
/// angles to normalized direction cosines for the steering vectors.
Pseudospectrum music_spectrum(const CovarianceMatrix& r, const geometry::GridArray& array,
                              int num_sources, double d_over_lambda,
                              const GridSpec& grid = {});

/// Noise-subspace projection power of one direction, ||En^H v||^2 / ||v||^2.
double noise_projection(const CovarianceMatrix& r, const geometry::GridArray& array,
                        int num_sources, double theta_bar, double phi_bar);

/// Iterative local MUSIC maximization around a coarse direction; used where
/// a full-grid sweep is unnecessary. Refinement reaches ~0.01 deg.
DoaEstimate refine_music(const CovarianceMatrix& r, const geometry::GridArray& array,
                         int num_sources, double d_over_lambda, double az0_rad,
                         double el0_rad);

/// Virtual covariance on the smoothing window: physical covariance entries
/// are redundancy-averaged per difference vector over the hole-free set,
/// then window-averaged per the plan. Result is Hermitian PSD of size
/// (window_x * window_y)^2.
CovarianceMatrix coarray_smoothed_covariance(const CovarianceMatrix& r,
                                             const geometry::GridArray& array,
                                             const geometry::SmoothingPlan& plan);

/// The window subarray as a dense grid array (steering for smoothed MUSIC).
geometry::GridArray window_array(const geometry::SmoothingPlan& plan, double pitch_m);

/// K largest local maxima with greedy suppression inside min_separation
/// (spherical distance) and per-axis quadratic refinement. May return fewer
/// than requested when the spectrum has fewer maxima.
std::vector<DoaEstimate> pick_peaks(const Pseudospectrum& spec, int count,
                                    double min_separation_deg = 5.0);

/// Great-circle angle between two directions, radians.
double spherical_distance(double az1, double el1, double az2, double el2);

}  // namespace beamloc::doa
