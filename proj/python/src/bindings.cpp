#include "screenr/batch.hpp"
#include "screenr/cli.hpp"
#include "screenr/conversation.hpp"
#include "screenr/engine.hpp"
#include "screenr/metrics.hpp"
#include "screenr/review.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace screenr;

namespace {

py::dict ingest_report_dict(const IngestReport& report)
{
    py::list dropped;
    for (const auto& d : report.dropped) {
        py::dict row;
        row["row"] = d.row;
        row["id"] = d.id;
        row["reason"] = std::string(to_string(d.reason));
        dropped.append(row);
    }
    py::dict out;
    out["rows_read"] = report.rows_read;
    out["dropped"] = dropped;
    return out;
}

py::dict batch_report_dict(const BatchReport& report)
{
    py::list failures;
    for (const auto& f : report.failures) {
        py::dict d;
        d["source_id"] = f.source_id;
        d["kind"] = std::string(to_string(f.kind));
        d["message"] = f.message;
        failures.append(d);
    }
    py::dict out;
    out["total"] = report.total;
    out["newly_screened"] = report.newly_screened;
    out["served_from_cache"] = report.served_from_cache;
    out["failures"] = failures;
    out["corrupt_cache_lines"] = report.cache_warnings.size();
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Chain-of-thought title/abstract screening and agreement statistics";

    static py::handle screenr_error = py::exception<Error>(m, "ScreenrError").release();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(screenr_error)(e.what());
            exc.attr("kind") = std::string(to_string(e.kind()));
            PyErr_SetObject(screenr_error.ptr(), exc.ptr());
        }
    });

    py::enum_<Role>(m, "Role")
        .value("system", Role::system)
        .value("user", Role::user)
        .value("assistant", Role::assistant);
    py::enum_<Verdict>(m, "Verdict").value("include", Verdict::include).value("exclude", Verdict::exclude);
    py::enum_<Method>(m, "Method").value("cot", Method::cot).value("zeroshot", Method::zeroshot);

    py::class_<Message>(m, "Message")
        .def(py::init<Role, std::string>(), py::arg("role"), py::arg("content"))
        .def_property_readonly("role", &Message::role)
        .def_property_readonly("content", &Message::content)
        .def("__eq__", [](const Message& a, const Message& b) { return a == b; })
        .def("__repr__", [](const Message& msg) {
            return "Message(" + std::string(to_string(msg.role())) + ", " + py::repr(py::str(msg.content())).cast<std::string>() + ")";
        });

    py::class_<Conversation>(m, "Conversation")
        .def(py::init<>())
        .def(py::init<std::vector<Message>>(), py::arg("messages"))
        .def("append", [](const Conversation& c, const Message& msg) { return c.append(msg); })
        .def_property_readonly("messages", &Conversation::messages)
        .def("__len__", &Conversation::size)
        .def("__getitem__",
             [](const Conversation& c, std::size_t i) {
                 if (i >= c.size()) {
                     throw py::index_error();
                 }
                 return c[i];
             })
        .def("__eq__", [](const Conversation& a, const Conversation& b) { return a == b; });

    m.def("render_transcript", &render_transcript, py::arg("conversation"));
    m.def("parse_transcript", &parse_transcript, py::arg("text"));
    m.def("parse_verdict", &parse_verdict, py::arg("text"));
    m.def("try_parse_verdict", &try_parse_verdict, py::arg("text"));

    m.def(
        "build_review_description",
        [](std::string title, std::string objective, std::string population, std::string concept_text,
           std::string context, std::vector<std::string> extra_criteria, std::optional<std::string> free_text) {
            ReviewDescription d;
            d.title = std::move(title);
            d.objective = std::move(objective);
            d.population = std::move(population);
            d.core_concept = std::move(concept_text);
            d.context = std::move(context);
            d.extra_criteria = std::move(extra_criteria);
            d.rendered_override = std::move(free_text);
            return build_review_description(d);
        },
        py::kw_only(), py::arg("title") = "", py::arg("objective") = "", py::arg("population") = "",
        py::arg("concept") = "", py::arg("context") = "", py::arg("extra_criteria") = std::vector<std::string>{},
        py::arg("free_text") = std::nullopt);

    py::class_<Source>(m, "Source")
        .def(py::init<std::string, std::string, std::string>(), py::arg("id"), py::arg("title"), py::arg("abstract"))
        .def_readwrite("id", &Source::id)
        .def_readwrite("title", &Source::title)
        .def_readwrite("abstract", &Source::abstract)
        .def("__repr__", [](const Source& s) { return "Source(" + s.id + ")"; });

    m.def(
        "ingest_sources",
        [](const std::filesystem::path& path, std::string id_column, std::string title_column,
           std::string abstract_column) {
            auto result = ingest_sources(path, {std::move(id_column), std::move(title_column), std::move(abstract_column)});
            return py::make_tuple(result.sources, ingest_report_dict(result.report));
        },
        py::arg("path"), py::arg("id_column") = "id", py::arg("title_column") = "title",
        py::arg("abstract_column") = "abstract");
    m.def(
        "sample_sources",
        [](const std::vector<Source>& sources, std::size_t n, std::uint64_t seed) {
            return sample_sources(sources, n, seed);
        },
        py::arg("sources"), py::arg("n"), py::arg("seed"));

    py::class_<Backend>(m, "Backend").def_property_readonly("model_name", &Backend::model_name);
    py::class_<ScriptedBackend, Backend>(m, "ScriptedBackend")
        .def(py::init<std::vector<std::string>, std::string>(), py::arg("replies"), py::arg("model_name") = "scripted")
        .def_property_readonly("calls", &ScriptedBackend::calls)
        .def_property_readonly("remaining", &ScriptedBackend::remaining)
        .def_property_readonly("received", &ScriptedBackend::received);

    py::class_<ScreeningResult>(m, "ScreeningResult")
        .def_readonly("source_id", &ScreeningResult::source_id)
        .def_readonly("method", &ScreeningResult::method)
        .def_readonly("model_name", &ScreeningResult::model_name)
        .def_readonly("template_version", &ScreeningResult::template_version)
        .def_readonly("verdict", &ScreeningResult::verdict)
        .def_readonly("transcript", &ScreeningResult::transcript)
        .def_readonly("content_hash", &ScreeningResult::content_hash)
        .def_property_readonly("ok", &ScreeningResult::ok)
        .def_property_readonly("failure",
                               [](const ScreeningResult& r) -> std::optional<std::string> {
                                   if (!r.failure) {
                                       return std::nullopt;
                                   }
                                   return std::string(to_string(r.failure->kind));
                               })
        .def_property_readonly("started_at", [](const ScreeningResult& r) { return format_timestamp(r.started_at); })
        .def_property_readonly("finished_at", [](const ScreeningResult& r) { return format_timestamp(r.finished_at); });

    m.def(
        "screen_source",
        [](Backend& backend, Method method, const std::string& review_text, const Source& source) {
            return screen_source(backend, method, review_text, source);
        },
        py::arg("backend"), py::arg("method"), py::arg("review_text"), py::arg("source"),
        py::call_guard<py::gil_scoped_release>());

    m.def(
        "screen_sources",
        [](Backend& backend, const std::string& review_text, const std::vector<Source>& sources, Method method,
           const std::filesystem::path& cache_path, std::size_t concurrency, bool retry_failures) {
            BatchOptions opts;
            opts.method = method;
            opts.cache_path = cache_path;
            opts.concurrency = concurrency;
            opts.retry_failures = retry_failures;
            BatchOutcome outcome;
            {
                py::gil_scoped_release release;
                outcome = screen_sources(backend, review_text, sources, opts);
            }
            return py::make_tuple(outcome.results, batch_report_dict(outcome.report));
        },
        py::arg("backend"), py::arg("review_text"), py::arg("sources"), py::kw_only(), py::arg("method") = Method::cot,
        py::arg("cache_path"), py::arg("concurrency") = 1, py::arg("retry_failures") = true);

    m.def("content_hash", &content_hash, py::arg("review_text"), py::arg("source"), py::arg("method"),
          py::arg("model_name"), py::arg("template_version"));

    py::class_<ConfusionMatrix>(m, "ConfusionMatrix")
        .def(py::init([](std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn) {
                 return ConfusionMatrix{tp, fp, tn, fn};
             }),
             py::arg("tp") = 0, py::arg("fp") = 0, py::arg("tn") = 0, py::arg("fn") = 0)
        .def_readwrite("tp", &ConfusionMatrix::tp)
        .def_readwrite("fp", &ConfusionMatrix::fp)
        .def_readwrite("tn", &ConfusionMatrix::tn)
        .def_readwrite("fn", &ConfusionMatrix::fn)
        .def_property_readonly("n", &ConfusionMatrix::n)
        .def("__eq__", [](const ConfusionMatrix& a, const ConfusionMatrix& b) { return a == b; });

    py::class_<Rates>(m, "Rates")
        .def_readonly("accuracy", &Rates::accuracy)
        .def_readonly("sensitivity", &Rates::sensitivity)
        .def_readonly("specificity", &Rates::specificity);

    m.def("stats", &stats, py::arg("matrix"));
    m.def(
        "confusion",
        [](const std::map<std::string, Verdict>& verdicts, const std::map<std::string, Verdict>& gold) {
            return confusion(verdicts, gold);
        },
        py::arg("verdicts"), py::arg("gold"));
    m.def(
        "cohen_kappa",
        [](const std::vector<Verdict>& a, const std::vector<Verdict>& b) { return cohen_kappa(a, b); },
        py::arg("a"), py::arg("b"));

    py::class_<ReviewScore>(m, "ReviewScore")
        .def(py::init([](std::string name, const ConfusionMatrix& matrix, std::optional<double> kappa_model_vs_gold) {
                 ReviewScore s;
                 s.review_name = std::move(name);
                 s.matrix = matrix;
                 if (matrix.n() > 0) {
                     s.rates = stats(matrix);
                 }
                 s.kappa_model_vs_gold = kappa_model_vs_gold;
                 return s;
             }),
             py::arg("name"), py::arg("matrix"), py::arg("kappa_model_vs_gold") = std::nullopt)
        .def_readonly("review_name", &ReviewScore::review_name)
        .def_readonly("matrix", &ReviewScore::matrix)
        .def_readonly("rates", &ReviewScore::rates)
        .def_readonly("kappa_model_vs_gold", &ReviewScore::kappa_model_vs_gold);

    py::class_<AggregateScore>(m, "AggregateScore")
        .def_readonly("pooled", &AggregateScore::pooled)
        .def_readonly("pooled_rates", &AggregateScore::pooled_rates)
        .def_readonly("accuracy", &AggregateScore::accuracy)
        .def_readonly("sensitivity", &AggregateScore::sensitivity)
        .def_readonly("specificity", &AggregateScore::specificity)
        .def_readonly("kappa_model_vs_gold", &AggregateScore::kappa_model_vs_gold)
        .def_readonly("kappa_human_vs_human", &AggregateScore::kappa_human_vs_human);

    m.def(
        "aggregate", [](const std::vector<ReviewScore>& scores) { return aggregate(scores); }, py::arg("scores"));
    m.def(
        "report",
        [](const std::vector<ReviewScore>& scores) {
            auto rep = report(scores, aggregate(scores));
            return py::make_tuple(rep.text, rep.machine.dump());
        },
        py::arg("scores"));

    m.def(
        "run_cli",
        [](std::vector<std::string> args, const std::string& stdin_text) {
            args.insert(args.begin(), "screenr");
            std::istringstream in(stdin_text);
            std::ostringstream out;
            std::ostringstream err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = cli::run(args, {in, out, err});
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), py::arg("stdin") = "");
}
