"""Closed vocabulary of raw code-graph node types, grouped by granularity."""

STATEMENT_TYPES = (
    "Statement", "SwitchStatement", "DoStatement", "GotoStatement", "WhileStatement",
    "BreakStatement", "CompoundStatement", "ForStatement", "ReturnStatement",
    "IdentifierDeclStatement", "TryStatement", "ClassDefStatement", "ContinueStatement",
    "IfStatement", "ExpressionStatement", "ElseStatement", "DeclStatement",
)

EXPRESSION_TYPES = (
    "Expression", "InclusiveOrExpression", "MultiplicativeExpression", "AssignmentExpression",
    "UnaryOperationExpression", "SizeofExpression", "OrExpression", "ShiftExpression",
    "RelationalExpression", "CallExpression", "CastExpression", "ConditionalExpression",
    "OperationExpression", "EqualityExpression", "AdditiveExpression", "PrimaryExpression",
    "AndExpression", "ExclusiveOrExpression", "BitAndExpression", "UnaryExpression",
)

SYMBOL_TYPES = (
    "Symbol", "File", "IncDec", "ForInit", "SizeofOperand", "PtrMemberAccess", "Sizeof",
    "IdentifierDeclType", "IdentifierDecl", "ClassDef", "ParameterList", "Callee", "Condition",
    "ArrayIndexing", "ArgumentList", "Parameter", "Argument", "ParameterType", "CastTarget",
    "Function", "ReturnType", "Label", "FunctionDef", "MemberAccess", "InitializerList",
    "CFGErrorNode", "InfiniteForNode", "CFGExitNode", "CFGEntryNode", "Identifier", "Decl",
    # operator token under a UnaryOperationExpression
    "UnaryOperator",
)

NODE_TYPES = frozenset(STATEMENT_TYPES + EXPRESSION_TYPES + SYMBOL_TYPES)

# Generic category names: accepted when ingesting external graphs, never emitted by the frontend.
GENERIC_TYPES = frozenset({"Statement", "Expression", "Symbol"})

SYNTHETIC_TYPES = frozenset({"CFGEntryNode", "CFGExitNode"})


def is_node_type(name):
    return name in NODE_TYPES
