import pandas as pd


def console_settings():
    pd.set_option('display.max_colwidth', 300)
    pd.set_option('display.max_rows', None)
    pd.set_option('display.max_columns', None)
    pd.set_option('display.width', 1000)


def frame_to_lines(df):
    """
    Renders a dataframe as whitespace aligned lines with a header line,
    empty frames render as the header only.
    """
    if not len(df):
        return ' '.join(df.columns)
    return df.to_string(index=False)
