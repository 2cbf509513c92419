import uvicorn

from pabeam import config


def main():
    uvicorn.run("pabeam.api:app", host=config.HOST, port=config.PORT, reload=False)


if __name__ == "__main__":
    main()
