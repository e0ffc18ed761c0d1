#include "stm/evalclf.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "stm/nn.hpp"
#include "stm/rng.hpp"

namespace stm {

namespace {

std::vector<std::string> sorted_classes(const std::vector<std::string>& labels) {
  std::vector<std::string> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  return classes;
}

std::vector<std::size_t> label_ids(const std::vector<std::string>& labels,
                                   const std::vector<std::string>& classes) {
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < classes.size(); ++c) index[classes[c]] = c;
  std::vector<std::size_t> ids;
  ids.reserve(labels.size());
  for (const auto& l : labels) {
    auto it = index.find(l);
    if (it == index.end()) throw ClassifierError("unseen class: " + l);
    ids.push_back(it->second);
  }
  return ids;
}

}  // namespace

MnbModel mnb_fit(const Matrix& features, const std::vector<std::string>& labels,
                 double alpha) {
  if (features.rows != labels.size() || features.rows == 0) {
    throw ClassifierError("mnb_fit: features/labels size mismatch");
  }
  if (alpha <= 0.0) throw ClassifierError("mnb_fit: alpha must be positive");

  MnbModel model;
  model.alpha = alpha;
  model.classes = sorted_classes(labels);
  const std::vector<std::size_t> ids = label_ids(labels, model.classes);
  const std::size_t C = model.classes.size();
  const std::size_t K = features.cols;

  std::vector<double> class_count(C, 0.0);
  Matrix mass(C, K);
  for (std::size_t r = 0; r < features.rows; ++r) {
    class_count[ids[r]] += 1.0;
    for (std::size_t k = 0; k < K; ++k) mass(ids[r], k) += features(r, k);
  }

  model.class_log_prior.resize(C);
  model.feature_log_prob = Matrix(C, K);
  for (std::size_t c = 0; c < C; ++c) {
    model.class_log_prior[c] =
        std::log(class_count[c] / static_cast<double>(features.rows));
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) total += mass(c, k);
    const double denom = total + static_cast<double>(K) * alpha;
    for (std::size_t k = 0; k < K; ++k) {
      model.feature_log_prob(c, k) = std::log((mass(c, k) + alpha) / denom);
    }
  }
  return model;
}

std::string mnb_predict(const MnbModel& model, std::span<const double> row) {
  if (row.size() != model.feature_log_prob.cols) {
    throw ClassifierError("mnb_predict: feature dimension mismatch");
  }
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < model.classes.size(); ++c) {
    double score = model.class_log_prior[c];
    for (std::size_t k = 0; k < row.size(); ++k) {
      score += row[k] * model.feature_log_prob(c, k);
    }
    if (score > best_score) {  // ties keep the earlier class
      best_score = score;
      best = c;
    }
  }
  return model.classes[best];
}

double logreg_objective(const Matrix& features,
                        const std::vector<std::size_t>& ids,
                        std::size_t num_classes, const std::vector<double>& flat,
                        double l2) {
  const std::size_t K = features.cols;
  const std::size_t C = num_classes;
  // flat layout: C*K weights then C biases
  double loss = 0.0;
  std::vector<double> logits(C);
  for (std::size_t r = 0; r < features.rows; ++r) {
    for (std::size_t c = 0; c < C; ++c) {
      double acc = flat[C * K + c];
      for (std::size_t k = 0; k < K; ++k) acc += flat[c * K + k] * features(r, k);
      logits[c] = acc;
    }
    const std::vector<double> probs = softmax(logits);
    loss -= std::log(probs[ids[r]]);
  }
  loss /= static_cast<double>(features.rows);
  double penalty = 0.0;
  for (std::size_t i = 0; i < C * K; ++i) penalty += flat[i] * flat[i];
  return loss + 0.5 * l2 * penalty;
}

std::vector<double> logreg_gradient(const Matrix& features,
                                    const std::vector<std::size_t>& ids,
                                    std::size_t num_classes,
                                    const std::vector<double>& flat, double l2) {
  const std::size_t K = features.cols;
  const std::size_t C = num_classes;
  std::vector<double> grad(flat.size(), 0.0);
  std::vector<double> logits(C);
  const double inv_n = 1.0 / static_cast<double>(features.rows);
  for (std::size_t r = 0; r < features.rows; ++r) {
    for (std::size_t c = 0; c < C; ++c) {
      double acc = flat[C * K + c];
      for (std::size_t k = 0; k < K; ++k) acc += flat[c * K + k] * features(r, k);
      logits[c] = acc;
    }
    const std::vector<double> probs = softmax(logits);
    for (std::size_t c = 0; c < C; ++c) {
      const double delta = (probs[c] - (ids[r] == c ? 1.0 : 0.0)) * inv_n;
      for (std::size_t k = 0; k < K; ++k) grad[c * K + k] += delta * features(r, k);
      grad[C * K + c] += delta;
    }
  }
  for (std::size_t i = 0; i < C * K; ++i) grad[i] += l2 * flat[i];
  return grad;
}

LogRegModel logreg_fit(const Matrix& features,
                       const std::vector<std::string>& labels,
                       const LogRegConfig& config) {
  if (features.rows != labels.size() || features.rows == 0) {
    throw ClassifierError("logreg_fit: features/labels size mismatch");
  }
  LogRegModel model;
  model.config = config;
  model.classes = sorted_classes(labels);
  if (model.classes.size() < 2) {
    throw ClassifierError("logreg_fit: needs at least 2 classes");
  }
  const std::vector<std::size_t> ids = label_ids(labels, model.classes);
  const std::size_t C = model.classes.size();
  const std::size_t K = features.cols;

  std::vector<double> flat(C * K + C, 0.0);
  for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
    const std::vector<double> grad =
        logreg_gradient(features, ids, C, flat, config.l2);
    double norm = 0.0;
    for (double g : grad) norm += g * g;
    if (std::sqrt(norm) < config.gradient_tolerance) break;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      flat[i] -= config.learning_rate * grad[i];
    }
  }

  model.weights = Matrix(C, K);
  std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(C * K),
            model.weights.data.begin());
  model.bias.assign(flat.begin() + static_cast<std::ptrdiff_t>(C * K),
                    flat.end());
  return model;
}

std::string logreg_predict(const LogRegModel& model,
                           std::span<const double> row) {
  if (row.size() != model.weights.cols) {
    throw ClassifierError("logreg_predict: feature dimension mismatch");
  }
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < model.classes.size(); ++c) {
    double score = model.bias[c];
    for (std::size_t k = 0; k < row.size(); ++k) {
      score += model.weights(c, k) * row[k];
    }
    if (score > best_score) {
      best_score = score;
      best = c;
    }
  }
  return model.classes[best];
}

CvReport cross_validate(const Matrix& features,
                        const std::vector<std::string>& labels,
                        ClassifierKind kind, std::size_t folds,
                        std::uint64_t seed) {
  if (features.rows != labels.size()) {
    throw ClassifierError("cross_validate: features/labels size mismatch");
  }
  // stratified assignment: shuffle indices within each class, deal them
  // round-robin across folds
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    by_class[labels[r]].push_back(r);
  }
  std::vector<std::size_t> fold_of(labels.size(), 0);
  std::size_t class_idx = 0;
  for (auto& [cls, members] : by_class) {
    if (members.size() < folds) {
      throw ClassifierError("class \"" + cls + "\" has fewer than " +
                            std::to_string(folds) + " examples");
    }
    RngStream rng(derive_seed(seed, class_idx++));
    rng.shuffle(members);
    for (std::size_t i = 0; i < members.size(); ++i) {
      fold_of[members[i]] = i % folds;
    }
  }

  CvReport report;
  report.seed = seed;
  report.kind = kind;
  for (std::size_t fold = 0; fold < folds; ++fold) {
    Matrix train_x(0, features.cols);
    std::vector<std::string> train_y;
    std::vector<std::size_t> test_rows;
    for (std::size_t r = 0; r < features.rows; ++r) {
      if (fold_of[r] == fold) {
        test_rows.push_back(r);
      } else {
        train_x.data.insert(train_x.data.end(), features.row(r),
                            features.row(r) + features.cols);
        train_x.rows += 1;
        train_y.push_back(labels[r]);
      }
    }

    std::size_t correct = 0;
    if (kind == ClassifierKind::mnb) {
      const MnbModel model = mnb_fit(train_x, train_y);
      for (std::size_t r : test_rows) {
        if (mnb_predict(model, {features.row(r), features.cols}) == labels[r]) {
          ++correct;
        }
      }
    } else {
      const LogRegModel model = logreg_fit(train_x, train_y);
      for (std::size_t r : test_rows) {
        if (logreg_predict(model, {features.row(r), features.cols}) ==
            labels[r]) {
          ++correct;
        }
      }
    }
    report.fold_accuracy.push_back(static_cast<double>(correct) /
                                   static_cast<double>(test_rows.size()));
  }
  for (double a : report.fold_accuracy) report.mean_accuracy += a;
  report.mean_accuracy /= static_cast<double>(folds);
  return report;
}

std::string cv_report_to_json(const CvReport& report) {
  const nlohmann::json doc = {
      {"classifier", report.kind == ClassifierKind::mnb ? "mnb" : "logreg"},
      {"fold_accuracy", report.fold_accuracy},
      {"mean_accuracy", report.mean_accuracy},
      {"seed", report.seed}};
  return doc.dump(2);
}

std::string cv_report_to_table(const std::vector<CvReport>& reports) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << std::left << std::setw(12) << "classifier";
  std::size_t folds = reports.empty() ? 0 : reports[0].fold_accuracy.size();
  for (std::size_t f = 0; f < folds; ++f) {
    out << std::setw(10) << ("fold" + std::to_string(f + 1));
  }
  out << std::setw(10) << "mean" << "\n";
  for (const auto& r : reports) {
    out << std::left << std::setw(12)
        << (r.kind == ClassifierKind::mnb ? "MNB" : "LR");
    for (double a : r.fold_accuracy) out << std::setw(10) << a;
    out << std::setw(10) << r.mean_accuracy << "\n";
  }
  return out.str();
}

}  // namespace stm
