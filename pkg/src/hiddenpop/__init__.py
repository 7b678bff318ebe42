"""hiddenpop: identify a hidden migrant-background subpopulation in a student
register by combining indicator algebra, exact survey linkage, supervised
prediction of the unobserved parental indicator, register expansion and
selection-bias reporting."""

__version__ = "0.1.0"
