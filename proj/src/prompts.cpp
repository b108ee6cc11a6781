// Prompt texts are kept verbatim, typos included.
#include "domeval/datagen.hpp"

namespace domeval::datagen {

namespace {

constexpr std::string_view kQaSystem = R"P(You are a Teacher/ Professor in the medical field. Your task is to setup a examination with free text answers. Using the provided context, formulate questions with different difficulties that capture the medical content from the context. Please also give the answers, so that the test could be corrected afterwards.
If you cannot generate any question to medical content, please skip it.
You MUST obey the following criteria:
- Restrict the question to the context information provided.
- vary between different question words (e.g. what, why, which, how, etc.)
- Ensure every question is fully self-contained and answerable without requiring additional context or prior questions/answers.
- Do NOT ask for figures, algortihms, tables, names of the present study or similar.
- Do NOT put phrases like "given provided context" or "in this work" or "in this case" or "what is algorithm a" or some questions regarding the study
- Replace these terms with specific details
- ONLY ask for medical details. DO NOT ask about the study, author or index, IGNORE them

BAD questions:
- What are the symptoms of the disease described
- How many patients were included in the study

GOOD questions:
- What are the symptoms of Corona
- Why should the patient drink so much water when having a fever

Sometimes the context may contain overhead such as titles, authors, study information or similar. Please only use the content that has a medical context. 

Output: ONLY JSON.)P";

constexpr std::string_view kMcqSystem = R"P(You are a Teacher/Professor in the medical field. 
Your task is to create multiple-choice questions with different difficulties based on the medical context provided.

For each question:
- Generate one question about important medical content
- Create exactly 4 answer options
- One option must be correct and from the context
- Three options must be plausible but incorrect (make these up)
- All options should have similar length and style
- Focus only on medical content
If you cannot generate any question to medical content, please skip it.
You MUST obey the following criteria:
- Restrict the question to the context information provided.
- vary between different question words (e.g. what, why, which, how, etc.)
- Ensure every question is fully self-contained and answerable without requiring additional context or prior questions/answers.
- Do NOT ask for figures, algortihms, tables, names of the present study or similar.
- Do NOT put phrases like "given provided context" or "in this work" or "in this case" or "what is algorithm a" or some questions regarding the study
- Replace these terms with specific details
- ONLY ask for medical details. DO NOT ask about the study, author or index, IGNORE them

BAD questions:
- What are the symptoms of the disease described
- How many patients were included in the study

GOOD questions:
- What are the symptoms of Corona
- Why should the patient drink so much water when having a fever

Sometimes the context may contain overhead such as titles, authors, study information or similar. Please only use the content that has a medical context. 

Output: ONLY JSON.)P";

constexpr std::string_view kQaFormat =
    R"P(The output should be a JSON array of objects, each with the string fields "question" and "answer". Example:
[{"question": "What does a prolonged QT interval indicate?", "answer": "Delayed ventricular repolarization."}])P";

constexpr std::string_view kMcqFormat =
    R"P(The output should be a JSON array of objects, each with the fields "question" (string), "options" (array of exactly 4 strings) and "correct" (the 0-based index of the correct option). Example:
[{"question": "Which lead ...?", "options": ["V1", "V2", "aVR", "III"], "correct": 0}])P";

std::string fill(std::string_view pre, std::string_view context, std::string_view mid,
                 std::string_view format, std::string_view post) {
    std::string s;
    s.reserve(pre.size() + context.size() + mid.size() + format.size() + post.size());
    s.append(pre).append(context).append(mid).append(format).append(post);
    return s;
}

}  // namespace

std::string_view qa_system_prompt() { return kQaSystem; }
std::string_view mcq_system_prompt() { return kMcqSystem; }
std::string_view qa_format_instructions() { return kQaFormat; }
std::string_view mcq_format_instructions() { return kMcqFormat; }

std::string qa_user_prompt(std::string_view context) {
    return fill(R"P(Here is the context for generating medical questions:

)P", context, R"P(
)P", kQaFormat, R"P(
Please answer in English and do not use any German words or phrases. Translate technical terms into English if necessary.
)P");
}

std::string mcq_user_prompt(std::string_view context) {
    return fill(R"P(Generate multiple-choice questions from this context:
)P", context, R"P(
)P", kMcqFormat, R"P(
Please answer in English and do not use any German words or phrases. Translate technical terms into English if necessary.

)P");
}

}  // namespace domeval::datagen
