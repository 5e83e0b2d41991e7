// Python bindings for the main operations: dataset ingestion and splitting,
// federated training, concentration bounds, the sampling Monte Carlo, k-means
// elbow curves, and the evaluation metrics.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rsfair/dataset.hpp"
#include "rsfair/fairness.hpp"
#include "rsfair/metrics.hpp"
#include "rsfair/protocol.hpp"
#include "rsfair/sampling.hpp"
#include "rsfair/synthetic.hpp"

namespace py = pybind11;
using namespace rsfair;

namespace {

py::dict trace_to_dict(const RoundTrace& t) {
  py::dict d;
  d["round"] = t.round;
  d["mode"] = t.mode;
  d["tau"] = t.tau;
  d["rmse_test"] = t.rmse_test;
  d["params_uploaded"] = t.params_uploaded;
  d["clients_uploaded"] = t.clients_uploaded;
  d["gamma"] = t.gamma;
  py::dict attrs;
  for (const auto& [attr, gm] : t.by_attribute) {
    py::dict a;
    a["rmse_disadvantaged"] = gm.rmse_g;
    a["rmse_advantaged"] = gm.rmse_ng;
    a["ldap"] = gm.ldap;
    a["ldap_abs"] = gm.ldap_abs;
    attrs[attr.c_str()] = a;
  }
  d["by_attribute"] = attrs;
  return d;
}

std::vector<std::vector<double>> matrix_to_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    rows[r].assign(m.row(r).begin(), m.row(r).end());
  return rows;
}

Matrix rows_to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols())
      throw std::invalid_argument("ragged matrix rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

}  // namespace

PYBIND11_MODULE(rsfair, m) {
  m.doc() = "federated matrix-factorization recommender simulator";

  py::register_exception<DataError>(m, "DataError");

  py::class_<Rating>(m, "Rating")
      .def_readonly("user_id", &Rating::user_id)
      .def_readonly("item_id", &Rating::item_id)
      .def_readonly("value", &Rating::value);

  py::class_<RatingDataset>(m, "RatingDataset")
      .def_readonly("n", &RatingDataset::n)
      .def_readonly("m", &RatingDataset::m)
      .def_readonly("ratings", &RatingDataset::ratings)
      .def("attribute_counts",
           [](const RatingDataset& ds, const std::string& attr) {
             return attribute_counts(ds, attr);
           })
      .def("__repr__", [](const RatingDataset& ds) {
        return "<RatingDataset n=" + std::to_string(ds.n) + " m=" + std::to_string(ds.m) +
               " ratings=" + std::to_string(ds.ratings.size()) + ">";
      });

  py::class_<Partition>(m, "Partition")
      .def_readonly("seed_users", &Partition::seed_users)
      .def_readonly("client_users", &Partition::client_users)
      .def_property_readonly("server_seed_size",
                             [](const Partition& p) { return p.server_seed.size(); })
      .def_property_readonly("train_sizes",
                             [](const Partition& p) {
                               std::vector<std::size_t> sizes;
                               for (const auto& t : p.train) sizes.push_back(t.size());
                               return sizes;
                             });

  py::class_<Hyperparams>(m, "Hyperparams")
      .def(py::init<>())
      .def_readwrite("k", &Hyperparams::k)
      .def_readwrite("lambda_r", &Hyperparams::lambda_r)
      .def_readwrite("lambda_f", &Hyperparams::lambda_f)
      .def_readwrite("eta", &Hyperparams::eta)
      .def_readwrite("gamma", &Hyperparams::gamma)
      .def_readwrite("gamma_decay", &Hyperparams::gamma_decay)
      .def_readwrite("rho", &Hyperparams::rho)
      .def_readwrite("tau", &Hyperparams::tau)
      .def_readwrite("rounds", &Hyperparams::rounds)
      .def_readwrite("fairmf_sweeps", &Hyperparams::fairmf_sweeps)
      .def_readwrite("fairmf_gamma_scale", &Hyperparams::fairmf_gamma_scale)
      .def_readwrite("local_iters", &Hyperparams::local_iters)
      .def_readwrite("predict_round", &Hyperparams::predict_round)
      .def_readwrite("train_sampled_only", &Hyperparams::train_sampled_only)
      .def_readwrite("clamp_eval", &Hyperparams::clamp_eval)
      .def_readwrite("workers", &Hyperparams::workers);

  py::class_<SyntheticSpec>(m, "SyntheticSpec")
      .def(py::init<>())
      .def_readwrite("users", &SyntheticSpec::users)
      .def_readwrite("items", &SyntheticSpec::items)
      .def_readwrite("rating_count", &SyntheticSpec::rating_count)
      .def_readwrite("female_users", &SyntheticSpec::female_users)
      .def_readwrite("under18_users", &SyntheticSpec::under18_users)
      .def_readwrite("min_ratings_per_user", &SyntheticSpec::min_ratings_per_user)
      .def_readwrite("max_ratings_per_user", &SyntheticSpec::max_ratings_per_user)
      .def_readwrite("noise_sigma", &SyntheticSpec::noise_sigma)
      .def_readwrite("rng_seed", &SyntheticSpec::rng_seed);

  m.def("load_movielens",
        [](const std::filesystem::path& dir, const std::string& format) {
          return load_movielens(dir, movielens_format_from_string(format));
        },
        py::arg("dir"), py::arg("format") = "ml100k");
  m.def("write_synthetic_movielens",
        [](const std::filesystem::path& dir, const SyntheticSpec& spec,
           const std::string& format) {
          write_synthetic_movielens(dir, spec, movielens_format_from_string(format));
        },
        py::arg("dir"), py::arg("spec") = SyntheticSpec{}, py::arg("format") = "ml100k");
  m.def("split", &split, py::arg("dataset"), py::arg("train_frac") = 0.8,
        py::arg("seed_user_frac") = 0.0, py::arg("rng_seed") = 1);
  m.def("restrict_seed_items", &restrict_seed_items, py::arg("partition"),
        py::arg("keep_frac"), py::arg("rng_seed") = 1);

  m.def("run_training",
        [](const RatingDataset& dataset, const Partition& partition, const Hyperparams& hp,
           const std::string& mode, std::uint64_t seed, const std::string& attribute) {
          TrainingOptions opts;
          opts.attribute = attribute;
          const auto result = run_training(dataset, partition, hp,
                                           run_mode_from_string(mode), seed, opts);
          py::list traces;
          for (const auto& t : result.traces) traces.append(trace_to_dict(t));
          py::dict out;
          out["traces"] = traces;
          out["trace_csv"] = trace_csv(result.traces, attribute);
          out["population"] = result.population;
          out["item_vectors"] = matrix_to_rows(result.server.item_vectors);
          return out;
        },
        py::arg("dataset"), py::arg("partition"), py::arg("hp"),
        py::arg("mode") = "rs-fedrec", py::arg("seed") = 1,
        py::arg("attribute") = "gender");

  m.def("lemma1_bound", &lemma1_bound, py::arg("sample_size"), py::arg("epsilon"));
  m.def("theorem1_bound",
        [](std::size_t n, double tau, double epsilon, double lo, double hi) {
          BoundQuery q;
          q.n = n;
          q.tau = tau;
          q.epsilon = epsilon;
          q.range_lo = lo;
          q.range_hi = hi;
          return theorem1_bound(q);
        },
        py::arg("n"), py::arg("tau"), py::arg("epsilon"), py::arg("range_lo") = 1.0,
        py::arg("range_hi") = 5.0);

  m.def("cluster_representation_mc",
        [](std::size_t n, std::size_t clusters, double tau, std::size_t trials,
           double deviation_frac, std::uint64_t seed) {
          const auto r = cluster_representation_mc(n, clusters, tau, trials,
                                                   deviation_frac, seed);
          py::dict d;
          d["sample_size"] = r.sample_size;
          d["mean_per_cluster_count"] = r.mean_per_cluster_count;
          d["exceedance_probability"] = r.exceedance_probability;
          d["min_per_cluster_count"] = r.min_per_cluster_count;
          return d;
        },
        py::arg("n"), py::arg("clusters"), py::arg("tau"), py::arg("trials") = 500,
        py::arg("deviation_frac") = 0.15, py::arg("seed") = 1);

  m.def("kmeans_elbow",
        [](const std::vector<std::vector<double>>& vectors,
           const std::vector<std::size_t>& k_range, std::uint64_t seed) {
          return kmeans_elbow(rows_to_matrix(vectors), k_range, seed);
        },
        py::arg("vectors"), py::arg("k_range"), py::arg("seed") = 1);

  m.def("rmse",
        [](const std::vector<std::pair<double, double>>& pairs, bool clamp) {
          return rmse(pairs, clamp);
        },
        py::arg("pairs"), py::arg("clamp") = true);

  m.def("sample_clients", &sample_clients, py::arg("n"), py::arg("tau"),
        py::arg("rng_seed"));
}
