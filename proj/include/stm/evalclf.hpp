#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stm/matrix.hpp"

namespace stm {

class ClassifierError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Multinomial naive Bayes over fractional (simplex) feature mass.
struct MnbModel {
  std::vector<std::string> classes;  // label order = tie-break order
  std::vector<double> class_log_prior;
  Matrix feature_log_prob;  // C x K
  double alpha = 1.0;
};

MnbModel mnb_fit(const Matrix& features, const std::vector<std::string>& labels,
                 double alpha = 1.0);
std::string mnb_predict(const MnbModel& model, std::span<const double> row);

struct LogRegConfig {
  double learning_rate = 0.5;
  std::size_t max_iterations = 1000;
  double l2 = 1e-4;
  double gradient_tolerance = 1e-6;
};

// Softmax regression, full-batch gradient descent, zero initialization.
struct LogRegModel {
  std::vector<std::string> classes;
  Matrix weights;  // C x K
  std::vector<double> bias;
  LogRegConfig config;
};

LogRegModel logreg_fit(const Matrix& features,
                       const std::vector<std::string>& labels,
                       const LogRegConfig& config = {});
std::string logreg_predict(const LogRegModel& model,
                           std::span<const double> row);

// Mean cross-entropy + L2 penalty; exposed for gradient checking.
double logreg_objective(const Matrix& features,
                        const std::vector<std::size_t>& label_ids,
                        std::size_t num_classes, const std::vector<double>& flat,
                        double l2);
std::vector<double> logreg_gradient(const Matrix& features,
                                    const std::vector<std::size_t>& label_ids,
                                    std::size_t num_classes,
                                    const std::vector<double>& flat, double l2);

enum class ClassifierKind { mnb, logreg };

struct CvReport {
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
  std::uint64_t seed = 0;
  ClassifierKind kind = ClassifierKind::mnb;
};

// Stratified k-fold cross-validation with a seeded within-class shuffle.
CvReport cross_validate(const Matrix& features,
                        const std::vector<std::string>& labels,
                        ClassifierKind kind, std::size_t folds = 5,
                        std::uint64_t seed = 0);

std::string cv_report_to_json(const CvReport& report);
std::string cv_report_to_table(const std::vector<CvReport>& reports);

}  // namespace stm
